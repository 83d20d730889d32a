use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{Bitstring, Csr, FlipState, SampleSet, SolveResult};
use crate::error::{Error, Result};
use crate::qubo::QuboModel;
use crate::seed::rng_from;

pub const DEFAULT_NUM_READS: usize = 10_000;
pub const DEFAULT_SWEEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaParams {
    pub num_reads: usize,
    pub sweeps: usize,
    /// Inverse temperature at the first sweep; `None` derives it from the model.
    pub beta_hot: Option<f64>,
    /// Inverse temperature at the last sweep; `None` derives it from the model.
    pub beta_cold: Option<f64>,
    pub seed: u64,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            num_reads: DEFAULT_NUM_READS,
            sweeps: DEFAULT_SWEEPS,
            beta_hot: None,
            beta_cold: None,
            seed: 0,
        }
    }
}

/// `(beta_hot, beta_cold)` from the per-variable maximal flip magnitude
/// `D_i = |Q_ii| + 2 sum_j |Q_ij|`: `1 / max D_i` and `1000 / min_{D_i > 0} D_i`.
pub fn default_schedule(model: &QuboModel) -> (f64, f64) {
    let mut d: Vec<f64> = model.diag().iter().map(|q| q.abs()).collect();
    for &(i, j, v) in model.couplings() {
        d[i] += 2.0 * v.abs();
        d[j] += 2.0 * v.abs();
    }
    let max = d.iter().copied().fold(0.0, f64::max);
    let min = d.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        return (1.0, 1000.0);
    }
    (1.0 / max, 1000.0 / min)
}

/// Metropolis single-flip annealing under a geometric inverse-temperature
/// schedule. Each read starts from a uniformly random bitstring and uses
/// seed `seed + read_index`; the final state of every read is sampled.
pub fn solve_sa(model: &QuboModel, params: &SaParams) -> Result<SolveResult> {
    if params.num_reads == 0 || params.sweeps == 0 {
        return Err(Error::InvalidInput("num_reads and sweeps must be >= 1".into()));
    }
    let (auto_hot, auto_cold) = default_schedule(model);
    let beta_hot = params.beta_hot.unwrap_or(auto_hot);
    let beta_cold = params.beta_cold.unwrap_or(auto_cold);
    if !(beta_hot > 0.0 && beta_hot < beta_cold && beta_cold.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "invalid schedule: need 0 < beta_hot ({beta_hot}) < beta_cold ({beta_cold})"
        )));
    }
    let start = Instant::now();
    let n = model.n();
    let csr = Csr::from_model(model);
    let betas: Vec<f64> = (0..params.sweeps)
        .map(|k| {
            if params.sweeps == 1 {
                beta_cold
            } else {
                let t = k as f64 / (params.sweeps - 1) as f64;
                beta_hot * (beta_cold / beta_hot).powf(t)
            }
        })
        .collect();

    let finals: Vec<Bitstring> = (0..params.num_reads)
        .into_par_iter()
        .map(|read| {
            let mut rng = rng_from(params.seed.wrapping_add(read as u64));
            let x0: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            let mut state = FlipState::new(model.diag(), &csr, x0);
            for &beta in &betas {
                for i in 0..n {
                    let d = state.delta(i);
                    if d <= 0.0 || rng.random::<f64>() < (-beta * d).exp() {
                        state.flip(i);
                    }
                }
            }
            Bitstring(state.x)
        })
        .collect();

    let mut set = SampleSet::new(model);
    for b in finals {
        set.add(b, 1);
    }
    let mut p = serde_json::Map::new();
    p.insert("num_reads".into(), json!(params.num_reads));
    p.insert("sweeps".into(), json!(params.sweeps));
    p.insert("beta_hot".into(), json!(beta_hot));
    p.insert("beta_cold".into(), json!(beta_cold));
    p.insert("schedule".into(), json!("geometric"));
    Ok(set.finish("sa", params.seed, p, start.elapsed().as_secs_f64()))
}
