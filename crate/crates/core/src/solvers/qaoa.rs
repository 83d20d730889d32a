//! QAOA on a dense state vector.
//!
//! Basis index `b` encodes `x_i = (b >> i) & 1`. The cost layer multiplies
//! each amplitude by `exp(-i gamma E(b))` with `E` the Ising energy of the
//! model (equal to the QUBO cost under `x = (1 - s) / 2`); the mixer applies
//! `exp(-i beta X)` to every qubit. Angles are tuned by Nelder–Mead on the
//! exact expectation, then the final state is sampled and every shot is
//! refined by steepest descent.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde_json::json;

use super::greedy::refine_with;
use super::{nelder_mead, Bitstring, Csr, SampleSet, SolveResult};
use crate::error::{Error, Result};
use crate::qubo::{IsingModel, QuboModel};
use crate::seed::rng_from;

pub const QAOA_MAX_VARS: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QaoaParams {
    pub layers: usize,
    pub shots: usize,
    pub max_iters: usize,
    /// Nelder–Mead starts: the linear ramp with `gamma_max` scaled by
    /// `1, 1/2, 1/4, ...`; the lowest expectation wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for QaoaParams {
    fn default() -> Self {
        QaoaParams {
            layers: 2,
            shots: 10_000,
            max_iters: 200,
            restarts: 4,
            seed: 0,
        }
    }
}

pub struct QaoaSimulator {
    n: usize,
    energies: Vec<f64>,
}

impl QaoaSimulator {
    pub fn new(ising: &IsingModel) -> Result<Self> {
        let n = ising.h.len();
        if n > QAOA_MAX_VARS {
            return Err(Error::SolverCap {
                solver: "qaoa",
                n,
                cap: QAOA_MAX_VARS,
            });
        }
        Ok(QaoaSimulator {
            n,
            energies: basis_energies(ising),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ising energy of every basis state.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn plus_state(&self) -> Vec<Complex64> {
        let dim = 1usize << self.n;
        vec![Complex64::new((dim as f64).recip().sqrt(), 0.0); dim]
    }

    pub fn apply_cost(&self, psi: &mut [Complex64], gamma: f64) {
        for (a, &e) in psi.iter_mut().zip(&self.energies) {
            *a *= Complex64::from_polar(1.0, -gamma * e);
        }
    }

    pub fn apply_mixer(&self, psi: &mut [Complex64], beta: f64) {
        let (s, c) = beta.sin_cos();
        let mis = Complex64::new(0.0, -s);
        for q in 0..self.n {
            let bit = 1usize << q;
            for block in psi.chunks_mut(2 * bit) {
                let (lo, hi) = block.split_at_mut(bit);
                for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (a, b) = (*u, *v);
                    *u = a * c + b * mis;
                    *v = a * mis + b * c;
                }
            }
        }
    }

    /// `|psi(gamma, beta)>`; `params = [gamma_1..gamma_p, beta_1..beta_p]`.
    pub fn state(&self, params: &[f64]) -> Vec<Complex64> {
        self.state_with(params, |_, _| {})
    }

    /// As [`state`](Self::state), calling `inspect(layer, psi)` after every
    /// layer.
    pub fn state_with(&self, params: &[f64], mut inspect: impl FnMut(usize, &[Complex64])) -> Vec<Complex64> {
        let p = params.len() / 2;
        let mut psi = self.plus_state();
        for l in 0..p {
            self.apply_cost(&mut psi, params[l]);
            self.apply_mixer(&mut psi, params[p + l]);
            inspect(l, &psi);
        }
        psi
    }

    pub fn expectation_of(&self, psi: &[Complex64]) -> f64 {
        psi.iter()
            .zip(&self.energies)
            .map(|(a, e)| a.norm_sqr() * e)
            .sum()
    }

    pub fn expectation(&self, params: &[f64]) -> f64 {
        self.expectation_of(&self.state(params))
    }

    /// Draw `shots` basis indices from `|psi|^2`.
    pub fn sample<R: Rng>(&self, psi: &[Complex64], shots: usize, rng: &mut R) -> Vec<u64> {
        let mut cdf = Vec::with_capacity(psi.len());
        let mut acc = 0.0;
        for a in psi {
            acc += a.norm_sqr();
            cdf.push(acc);
        }
        (0..shots)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                cdf.partition_point(|&c| c <= u).min(psi.len() - 1) as u64
            })
            .collect()
    }
}

/// Ising energies over all basis states, built by flipping the lowest set
/// bit of each index from its predecessor.
fn basis_energies(ising: &IsingModel) -> Vec<f64> {
    let n = ising.h.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b, v) in &ising.j {
        adj[a].push((b, v));
        adj[b].push((a, v));
    }
    let dim = 1usize << n;
    let mut e = vec![0.0; dim];
    e[0] = ising.offset + ising.h.iter().sum::<f64>() + ising.j.iter().map(|t| t.2).sum::<f64>();
    for b in 1..dim {
        let i = b.trailing_zeros() as usize;
        let prev = b & (b - 1);
        // s_i goes from +1 to -1 in `prev -> b`.
        let local: f64 = ising.h[i]
            + adj[i]
                .iter()
                .map(|&(j, v)| if prev >> j & 1 == 1 { -v } else { v })
                .sum::<f64>();
        e[b] = e[prev] - 2.0 * local;
    }
    e
}

/// Linear-ramp start: `gamma_l = l/p * gamma_max`, `beta_l = (1 - l/p) * pi/4`.
pub fn initial_angles(ising: &IsingModel, layers: usize) -> Vec<f64> {
    let scale = match ising.max_abs_coupling() {
        j if j > 0.0 => j,
        _ => ising.max_abs_field().max(f64::MIN_POSITIVE),
    };
    let gamma_max = 1.0 / scale;
    let p = layers as f64;
    let mut v: Vec<f64> = (1..=layers).map(|l| l as f64 / p * gamma_max).collect();
    v.extend((1..=layers).map(|l| (1.0 - l as f64 / p) * FRAC_PI_4));
    v
}

pub fn solve_qaoa_sim(model: &QuboModel, params: &QaoaParams) -> Result<SolveResult> {
    if params.layers == 0 || params.shots == 0 || params.restarts == 0 {
        return Err(Error::InvalidInput("layers, shots and restarts must be >= 1".into()));
    }
    let start = Instant::now();
    let ising = model.to_ising();
    let sim = QaoaSimulator::new(&ising)?;

    let ramp = initial_angles(&ising, params.layers);
    let p = params.layers;
    let opt = (0..params.restarts)
        .map(|r| {
            let scale = 0.5f64.powi(r as i32);
            let x0: Vec<f64> = ramp
                .iter()
                .enumerate()
                .map(|(k, &v)| if k < p { v * scale } else { v })
                .collect();
            let gamma_step = 0.25 * x0[p - 1].abs().max(1e-6);
            let step: Vec<f64> = (0..2 * p).map(|k| if k < p { gamma_step } else { 0.2 }).collect();
            nelder_mead(|a| sim.expectation(a), &x0, &step, params.max_iters, 1e-10)
        })
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("restarts >= 1");

    let psi = sim.state(&opt.x);
    let mut rng = rng_from(params.seed);
    let raw = sim.sample(&psi, params.shots, &mut rng);

    let csr = Csr::from_model(model);
    let mut refined: HashMap<u64, Bitstring> = HashMap::new();
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for &b in &raw {
        *counts.entry(b).or_insert(0) += 1;
    }
    let mut set = SampleSet::new(model);
    let mut keys: Vec<u64> = counts.keys().copied().collect();
    keys.sort_unstable();
    let mut raw_best = f64::INFINITY;
    for b in keys {
        let x = Bitstring::from_mask(b, model.n());
        raw_best = raw_best.min(model.cost_unchecked(x.bits()));
        let r = refined
            .entry(b)
            .or_insert_with(|| refine_with(model, &csr, x.0))
            .clone();
        set.add(r, counts[&b]);
    }

    let mut p = serde_json::Map::new();
    p.insert("layers".into(), json!(params.layers));
    p.insert("restarts".into(), json!(params.restarts));
    p.insert("shots".into(), json!(params.shots));
    p.insert("max_iters".into(), json!(params.max_iters));
    p.insert("optimizer".into(), json!("nelder-mead"));
    p.insert("gammas".into(), json!(opt.x[..params.layers]));
    p.insert("betas".into(), json!(opt.x[params.layers..]));
    p.insert("expectation".into(), json!(opt.value));
    p.insert("optimizer_iterations".into(), json!(opt.iterations));
    p.insert("raw_best_cost".into(), json!(raw_best));
    p.insert("local_refine".into(), json!(true));
    Ok(set.finish("qaoa", params.seed, p, start.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::spins_from_bits;

    fn norm(psi: &[Complex64]) -> f64 {
        psi.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    #[test]
    fn energies_match_ising_model() {
        let m = QuboModel::new(vec![0.3, -1.0, 0.7, -0.2], vec![(0, 1, 0.5), (1, 3, -0.4), (0, 2, 1.2)])
            .unwrap();
        let is = m.to_ising();
        let sim = QaoaSimulator::new(&is).unwrap();
        for b in 0..16u64 {
            let x = Bitstring::from_mask(b, 4);
            let e = is.energy(&spins_from_bits(x.bits())).unwrap();
            assert!((sim.energies()[b as usize] - e).abs() < 1e-12);
            assert!((e - m.cost(x.bits()).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn layers_preserve_norm() {
        let m = QuboModel::new(vec![0.3, -1.0, 0.7], vec![(0, 1, 0.5), (1, 2, -0.4)]).unwrap();
        let sim = QaoaSimulator::new(&m.to_ising()).unwrap();
        sim.state_with(&[0.4, 1.3, -0.7, 0.2, 0.9, 0.1], |_, psi| {
            assert!((norm(psi) - 1.0).abs() < 1e-10);
        });
    }

    #[test]
    fn zero_angles_leave_uniform_state() {
        let m = QuboModel::new(vec![0.3, -1.0, 0.7], vec![(0, 1, 0.5)]).unwrap();
        let sim = QaoaSimulator::new(&m.to_ising()).unwrap();
        let psi = sim.state(&[0.0, 0.0]);
        assert!(psi.iter().all(|a| (a.norm_sqr() - 0.125).abs() < 1e-15));
    }

    #[test]
    fn cap_enforced() {
        let m = QuboModel::new(vec![0.0; QAOA_MAX_VARS + 1], vec![]).unwrap();
        assert!(matches!(
            solve_qaoa_sim(&m, &QaoaParams::default()),
            Err(Error::SolverCap { .. })
        ));
    }
}
