//! QUBO solvers: exhaustive enumeration, simulated annealing, greedy descent
//! and a QAOA state-vector simulator.
//!
//! Ties between equal-cost bitstrings are always broken toward the smaller
//! [`Bitstring`] (see its `Ord`).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qubo::QuboModel;

mod anneal;
mod exact;
mod greedy;
mod neldermead;
mod qaoa;

pub use anneal::{default_schedule, solve_sa, SaParams, DEFAULT_NUM_READS, DEFAULT_SWEEPS};
pub use exact::{solve_exact, EXACT_MAX_VARS};
pub use greedy::{local_refine, solve_greedy};
pub use neldermead::{nelder_mead, NelderMeadResult};
pub use qaoa::{initial_angles, solve_qaoa_sim, QaoaParams, QaoaSimulator, QAOA_MAX_VARS};

/// Relative cost tolerance under which two bitstrings count as tied.
pub const TIE_TOL: f64 = 1e-9;

pub(crate) fn tie_tol(cost: f64) -> f64 {
    TIE_TOL * (1.0 + cost.abs())
}

/// Assignment of the QUBO variables, one byte (0 or 1) per variable.
///
/// Displayed with variable 0 leftmost. Ordering compares the highest-index
/// variable first, so the minimum of a set of tied bitstrings is the one
/// with the smallest integer value `sum_i x_i 2^i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitstring(pub Vec<u8>);

impl Bitstring {
    pub fn zeros(n: usize) -> Self {
        Bitstring(vec![0; n])
    }

    /// Low `n` bits of `mask`, bit `i` to variable `i`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Bitstring((0..n).map(|i| ((mask >> i) & 1) as u8).collect())
    }

    pub fn to_mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| m | ((b as u64 & 1) << i))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b != 0).count()
    }
}

impl Ord for Bitstring {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.iter().rev().cmp(other.0.iter().rev()))
    }
}

impl PartialOrd for Bitstring {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b != 0 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitstring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidInput(format!("invalid bit {c:?} in bitstring"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Bitstring)
    }
}

impl Serialize for Bitstring {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bitstring {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sampled bitstrings with counts and costs plus the best record.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub solver: String,
    pub seed: u64,
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub n: usize,
    pub samples: BTreeMap<Bitstring, u64>,
    pub costs: BTreeMap<Bitstring, f64>,
    pub best_bitstring: Bitstring,
    pub best_cost: f64,
    pub total_samples: u64,
    /// Seconds; kept out of the JSON export so results stay byte-stable.
    pub wall_time: f64,
}

impl SolveResult {
    /// Fraction of samples equal to `target`.
    pub fn probability_of(&self, target: &Bitstring) -> f64 {
        if self.total_samples == 0 {
            return 0.0;
        }
        *self.samples.get(target).unwrap_or(&0) as f64 / self.total_samples as f64
    }

    /// Fraction of samples whose cost is within tie tolerance of `cost`.
    pub fn probability_of_cost(&self, cost: f64) -> f64 {
        let hits: u64 = self
            .samples
            .iter()
            .filter(|(b, _)| (self.costs[*b] - cost).abs() <= tie_tol(cost))
            .map(|(_, c)| c)
            .sum();
        hits as f64 / self.total_samples.max(1) as f64
    }

    /// Costs of every sample, expanded by count, ascending.
    pub fn cost_samples(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .samples
            .iter()
            .flat_map(|(b, &c)| std::iter::repeat_n(self.costs[b], c as usize))
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn to_json(&self) -> SolveResultJson {
        let mut histogram: Vec<HistogramEntry> = self
            .samples
            .iter()
            .map(|(b, &count)| HistogramEntry {
                bitstring: b.clone(),
                count,
                cost: self.costs[b],
            })
            .collect();
        histogram.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.bitstring.cmp(&b.bitstring)));
        SolveResultJson {
            solver: self.solver.clone(),
            seed: self.seed,
            n: self.n,
            parameters: self.parameters.clone(),
            total_samples: self.total_samples,
            best: BestRecord {
                bitstring: self.best_bitstring.clone(),
                cost: self.best_cost,
            },
            histogram,
        }
    }

    pub fn from_json(j: SolveResultJson) -> Result<Self> {
        let mut samples = BTreeMap::new();
        let mut costs = BTreeMap::new();
        for e in j.histogram {
            if e.bitstring.len() != j.n {
                return Err(Error::LengthMismatch {
                    expected: j.n,
                    got: e.bitstring.len(),
                });
            }
            samples.insert(e.bitstring.clone(), e.count);
            costs.insert(e.bitstring, e.cost);
        }
        Ok(SolveResult {
            solver: j.solver,
            seed: j.seed,
            parameters: j.parameters,
            n: j.n,
            samples,
            costs,
            best_bitstring: j.best.bitstring,
            best_cost: j.best.cost,
            total_samples: j.total_samples,
            wall_time: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResultJson {
    pub solver: String,
    pub seed: u64,
    pub n: usize,
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub total_samples: u64,
    pub best: BestRecord,
    pub histogram: Vec<HistogramEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub bitstring: Bitstring,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub bitstring: Bitstring,
    pub count: u64,
    pub cost: f64,
}

/// Aggregates samples in a deterministic order.
pub(crate) struct SampleSet<'m> {
    model: &'m QuboModel,
    samples: BTreeMap<Bitstring, u64>,
    costs: BTreeMap<Bitstring, f64>,
    total: u64,
}

impl<'m> SampleSet<'m> {
    pub fn new(model: &'m QuboModel) -> Self {
        SampleSet {
            model,
            samples: BTreeMap::new(),
            costs: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn add(&mut self, b: Bitstring, count: u64) {
        if !self.costs.contains_key(&b) {
            let c = self.model.cost_unchecked(b.bits());
            self.costs.insert(b.clone(), c);
        }
        *self.samples.entry(b).or_insert(0) += count;
        self.total += count;
    }

    pub fn finish(
        self,
        solver: &str,
        seed: u64,
        parameters: serde_json::Map<String, serde_json::Value>,
        wall_time: f64,
    ) -> SolveResult {
        let (best_bitstring, best_cost) = select_best(self.costs.iter().map(|(b, &c)| (b, c)))
            .map(|(b, c)| (b.clone(), c))
            .unwrap_or_else(|| (Bitstring::zeros(self.model.n()), 0.0));
        SolveResult {
            solver: solver.to_string(),
            seed,
            parameters,
            n: self.model.n(),
            samples: self.samples,
            costs: self.costs,
            best_bitstring,
            best_cost,
            total_samples: self.total,
            wall_time,
        }
    }
}

/// Minimum-cost entry; among entries within tie tolerance of the minimum, the
/// smallest bitstring.
pub(crate) fn select_best<'a, I>(entries: I) -> Option<(&'a Bitstring, f64)>
where
    I: IntoIterator<Item = (&'a Bitstring, f64)> + Clone,
{
    let min = entries
        .clone()
        .into_iter()
        .map(|(_, c)| c)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    entries
        .into_iter()
        .filter(|(_, c)| *c <= min + tie_tol(min))
        .min_by(|a, b| a.0.cmp(b.0))
}

/// Compressed neighbor lists for incremental flip updates.
pub(crate) struct Csr {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn from_model(model: &QuboModel) -> Self {
        let n = model.n();
        let mut degree = vec![0usize; n];
        for &(i, j, _) in model.couplings() {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut cols = vec![0u32; offsets[n]];
        let mut vals = vec![0.0; offsets[n]];
        for &(i, j, v) in model.couplings() {
            cols[fill[i]] = j as u32;
            vals[fill[i]] = v;
            fill[i] += 1;
            cols[fill[j]] = i as u32;
            vals[fill[j]] = v;
            fill[j] += 1;
        }
        Csr { offsets, cols, vals }
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }
}

/// Bit assignment with cached local fields `f_i = sum_j Q_ij x_j`, so the
/// cost change of flipping `i` is `(1 - 2 x_i) (Q_ii + 2 f_i)`.
pub(crate) struct FlipState<'a> {
    diag: &'a [f64],
    csr: &'a Csr,
    pub x: Vec<u8>,
    field: Vec<f64>,
}

impl<'a> FlipState<'a> {
    pub fn new(diag: &'a [f64], csr: &'a Csr, x: Vec<u8>) -> Self {
        let mut field = vec![0.0; x.len()];
        for (i, f) in field.iter_mut().enumerate() {
            *f = csr.row(i).filter(|&(j, _)| x[j] != 0).map(|(_, v)| v).sum();
        }
        FlipState { diag, csr, x, field }
    }

    #[inline]
    pub fn delta(&self, i: usize) -> f64 {
        let d = self.diag[i] + 2.0 * self.field[i];
        if self.x[i] != 0 {
            -d
        } else {
            d
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        let sign = if self.x[i] != 0 { -1.0 } else { 1.0 };
        self.x[i] ^= 1;
        for (j, v) in self.csr.row(i) {
            self.field[j] += sign * v;
        }
    }
}

pub(crate) fn check_bits(model: &QuboModel, x: &[u8]) -> Result<()> {
    if x.len() != model.n() {
        return Err(Error::LengthMismatch {
            expected: model.n(),
            got: x.len(),
        });
    }
    if x.iter().any(|&b| b > 1) {
        return Err(Error::InvalidInput("bitstring entries must be 0 or 1".into()));
    }
    Ok(())
}
