use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{check_bits, Bitstring, Csr, FlipState, SampleSet, SolveResult};
use crate::error::{Error, Result};
use crate::qubo::QuboModel;
use crate::seed::rng_from;

/// A flip must lower the cost by more than this to count as an improvement.
const IMPROVE_EPS: f64 = 1e-12;

/// Steepest single-flip descent to a 1-flip local minimum. Equal gains go
/// to the lowest variable index.
fn descend(state: &mut FlipState<'_>) {
    let n = state.x.len();
    loop {
        let mut best = (usize::MAX, -IMPROVE_EPS);
        for i in 0..n {
            let d = state.delta(i);
            if d < best.1 {
                best = (i, d);
            }
        }
        if best.0 == usize::MAX {
            return;
        }
        state.flip(best.0);
    }
}

/// Steepest-descent refinement of `x`; the cost never increases.
pub fn local_refine(model: &QuboModel, x: &Bitstring) -> Result<Bitstring> {
    check_bits(model, x.bits())?;
    let csr = Csr::from_model(model);
    Ok(refine_with(model, &csr, x.0.clone()))
}

pub(crate) fn refine_with(model: &QuboModel, csr: &Csr, x: Vec<u8>) -> Bitstring {
    let mut state = FlipState::new(model.diag(), csr, x);
    descend(&mut state);
    Bitstring(state.x)
}

/// Zero-temperature annealing: random starts followed by steepest descent.
pub fn solve_greedy(model: &QuboModel, num_reads: usize, seed: u64) -> Result<SolveResult> {
    if num_reads == 0 {
        return Err(Error::InvalidInput("num_reads must be >= 1".into()));
    }
    let start = Instant::now();
    let n = model.n();
    let csr = Csr::from_model(model);
    let finals: Vec<Bitstring> = (0..num_reads)
        .into_par_iter()
        .map(|read| {
            let mut rng = rng_from(seed.wrapping_add(read as u64));
            let x0: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            refine_with(model, &csr, x0)
        })
        .collect();
    let mut set = SampleSet::new(model);
    for b in finals {
        set.add(b, 1);
    }
    let mut p = serde_json::Map::new();
    p.insert("num_reads".into(), json!(num_reads));
    Ok(set.finish("greedy", seed, p, start.elapsed().as_secs_f64()))
}
