use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use super::{tie_tol, Bitstring, Csr, FlipState, SampleSet, SolveResult};
use crate::error::{Error, Result};
use crate::qubo::QuboModel;

pub const EXACT_MAX_VARS: usize = 28;

/// Number of leading variables fixed per parallel chunk.
const CHUNK_BITS: usize = 6;

/// Provable global minimizer by exhaustive enumeration.
///
/// The low variables are enumerated in counting order with incremental
/// cost updates; the high `CHUNK_BITS` variables select a chunk.
pub fn solve_exact(model: &QuboModel) -> Result<SolveResult> {
    let n = model.n();
    if n > EXACT_MAX_VARS {
        return Err(Error::SolverCap {
            solver: "exact",
            n,
            cap: EXACT_MAX_VARS,
        });
    }
    let start = Instant::now();
    let csr = Csr::from_model(model);
    let high = n.min(CHUNK_BITS);
    let low = n - high;

    let per_chunk: Vec<Vec<(u64, f64)>> = (0..1u64 << high)
        .into_par_iter()
        .map(|chunk| enumerate_chunk(model, &csr, chunk << low, low))
        .collect();

    let candidates: Vec<(u64, f64)> = per_chunk.into_iter().flatten().collect();
    let min = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let best_mask = candidates
        .iter()
        .filter(|c| c.1 <= min + tie_tol(min))
        .map(|c| c.0)
        .min()
        .unwrap_or(0);

    let mut set = SampleSet::new(model);
    set.add(Bitstring::from_mask(best_mask, n), 1);
    let mut params = serde_json::Map::new();
    params.insert("enumerated_states".into(), json!(1u64 << n));
    Ok(set.finish("exact", 0, params, start.elapsed().as_secs_f64()))
}

/// Near-minimal states of one chunk: every state within tie tolerance of the
/// chunk minimum, in counting order.
fn enumerate_chunk(model: &QuboModel, csr: &Csr, base: u64, low: usize) -> Vec<(u64, f64)> {
    let n = model.n();
    let x0 = Bitstring::from_mask(base, n).0;
    let mut cost = model.cost_unchecked(&x0);
    let mut state = FlipState::new(model.diag(), csr, x0);
    let mut best = cost;
    let mut keep: Vec<(u64, f64)> = vec![(base, cost)];

    for counter in 1u64..(1u64 << low) {
        // Increment: clear trailing ones, set the next zero.
        let flips = counter.trailing_zeros() as usize;
        for i in 0..flips {
            cost += state.delta(i);
            state.flip(i);
        }
        cost += state.delta(flips);
        state.flip(flips);

        if cost <= best + tie_tol(best) {
            if cost < best {
                best = cost;
                keep.retain(|c| c.1 <= best + tie_tol(best));
            }
            keep.push((base | counter, cost));
        }
    }
    keep
}
