//! Two-qubit gate estimates for running a QUBO as a phase-separation
//! circuit, and the quadratic extrapolation of those counts with problem size.
//!
//! The gate model is parametric: each retained coupling costs
//! `gates_per_edge` entangling gates, and hardware routing overhead is a
//! scalar `routing_factor`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::QuboModel;

pub const DEFAULT_GATES_PER_EDGE: u32 = 2;
pub const DEFAULT_ROUTING_FACTOR: f64 = 3.0;
pub const DEFAULT_TARGET_N: usize = 900;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEstimate {
    pub n_vars: usize,
    pub coupling_edges: usize,
    pub gates_per_edge: u32,
    pub routing_factor: f64,
    pub total_two_qubit: u64,
}

pub fn estimate_gates(model: &QuboModel, gates_per_edge: u32, routing_factor: f64) -> Result<GateEstimate> {
    if !(routing_factor >= 1.0) || !routing_factor.is_finite() {
        return Err(Error::InvalidInput(format!(
            "routing_factor must be >= 1, got {routing_factor}"
        )));
    }
    let edges = model.couplings().len();
    let total = (gates_per_edge as f64 * routing_factor * edges as f64).round() as u64;
    Ok(GateEstimate {
        n_vars: model.n(),
        coupling_edges: edges,
        gates_per_edge,
        routing_factor,
        total_two_qubit: total,
    })
}

/// Least-squares fit `count ~ a N^2 + b N + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual_rms: f64,
    /// Set when `a < 0`, i.e. the fit bends downward.
    pub negative_curvature: bool,
}

impl ScalingFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.a * n * n + self.b * n + self.c
    }

    /// Mean of the fitted counts.
    pub fn mean_count(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len() as f64
    }
}

/// Fit the quadratic and evaluate it at `target_n`, floored at zero.
pub fn fit_and_extrapolate(points: &[(f64, f64)], target_n: f64) -> Result<(ScalingFit, f64)> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "quadratic fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidInput(
            "quadratic fit needs at least 3 distinct N values".into(),
        ));
    }
    // Order-independent: sort the points before assembling the system.
    let mut pts = points.to_vec();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    // Center and scale N for conditioning, then map coefficients back.
    let mu = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let s = pts.iter().map(|p| (p.0 - mu).abs()).fold(0.0, f64::max).max(1.0);
    let design = DMatrix::from_fn(pts.len(), 3, |r, col| ((pts[r].0 - mu) / s).powi(2 - col as i32));
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::InvalidInput(format!("least squares failed: {e}")))?;
    let (ka, kb, kc) = (coef[0], coef[1], coef[2]);
    let a = ka / (s * s);
    let b = kb / s - 2.0 * ka * mu / (s * s);
    let c = ka * mu * mu / (s * s) - kb * mu / s + kc;

    let resid = &design * &coef - &y;
    let residual_rms = (resid.norm_squared() / pts.len() as f64).sqrt();
    let fit = ScalingFit {
        points: pts,
        a,
        b,
        c,
        residual_rms,
        negative_curvature: a < 0.0,
    };
    let projected = fit.eval(target_n).max(0.0);
    Ok((fit, projected))
}

/// Sweep report written by the `estimate` command and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub estimates: Vec<GateEstimate>,
    pub fit: Option<ScalingFit>,
    pub target_n: usize,
    pub projection: Option<f64>,
    pub gates_per_edge: u32,
    pub routing_factor: f64,
}

impl ScalingReport {
    /// Report over `estimates`; the fit is attempted only with at least
    /// three distinct sizes.
    pub fn from_estimates(estimates: Vec<GateEstimate>, target_n: usize) -> Self {
        let (gates_per_edge, routing_factor) = estimates
            .first()
            .map(|e| (e.gates_per_edge, e.routing_factor))
            .unwrap_or((DEFAULT_GATES_PER_EDGE, DEFAULT_ROUTING_FACTOR));
        let points: Vec<(f64, f64)> = estimates
            .iter()
            .map(|e| (e.n_vars as f64, e.total_two_qubit as f64))
            .collect();
        let (fit, projection) = match fit_and_extrapolate(&points, target_n as f64) {
            Ok((f, p)) => (Some(f), Some(p)),
            Err(_) => (None, None),
        };
        ScalingReport {
            estimates,
            fit,
            target_n,
            projection,
            gates_per_edge,
            routing_factor,
        }
    }
}
