//! Gaussian-mixture fit of a density as a QUBO, and its Ising view.
//!
//! Selecting sites `x` approximates the density by `A * sum_i x_i G_i`, where
//! `G_i` is the unit-normalized isotropic Gaussian of variance `sigma2`
//! centered on site `i`. Expanding the squared L2 residual over the pocket
//! gives
//!
//! ```text
//! I^2(x) = const + sum_i Q_ii x_i + 2 sum_{i<j} Q_ij x_i x_j
//! Q_ii   = A^2 <G_i, G_i> - 2 A <g, G_i>
//! Q_ij   = A^2 <G_i, G_j>
//! const  = <g, g>
//! ```
//!
//! Gaussian overlaps are closed-form; `<g, G_i>` is a Riemann sum over the
//! source grid.

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::geom::{dist2, Vec3};
use crate::sitegrid::SiteGrid;
use crate::structure::PocketBox;

pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-8;
/// Data-term quadrature radius in units of sigma.
pub const QUADRATURE_RADIUS_SIGMAS: f64 = 6.0;

/// Symmetric QUBO matrix stored as a diagonal plus the strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboModel {
    n: usize,
    diag: Vec<f64>,
    /// `(i, j, Q_ij)` with `i < j`, sorted, unique.
    couplings: Vec<(usize, usize, f64)>,
    /// Dropped `<g, g>` term; only needed to report I^2.
    pub constant: f64,
    pub truncation_eps: f64,
}

impl QuboModel {
    /// General constructor. Couplings may be given in either orientation;
    /// duplicates are rejected.
    pub fn new(diag: Vec<f64>, couplings: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = diag.len();
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite diagonal entry".into()));
        }
        let mut cs = Vec::with_capacity(couplings.len());
        for (i, j, v) in couplings {
            if i == j || i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "invalid coupling index ({i}, {j}) for {n} variables"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coupling ({i}, {j})")));
            }
            cs.push((i.min(j), i.max(j), v));
        }
        cs.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = cs.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidInput(format!(
                "duplicate coupling ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(QuboModel {
            n,
            diag,
            couplings: cs,
            constant: 0.0,
            truncation_eps: 0.0,
        })
    }

    /// Dense symmetric matrix input; entries with `|Q_ij| < eps` are dropped.
    pub fn from_dense(q: &[Vec<f64>], eps: f64) -> Result<Self> {
        let n = q.len();
        let mut couplings = Vec::new();
        for i in 0..n {
            if q[i].len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: q[i].len(),
                });
            }
            for j in i + 1..n {
                if q[i][j] != q[j][i] {
                    return Err(Error::InvalidInput(format!("matrix not symmetric at ({i}, {j})")));
                }
                if q[i][j].abs() >= eps && q[i][j] != 0.0 {
                    couplings.push((i, j, q[i][j]));
                }
            }
        }
        let mut m = Self::new((0..n).map(|i| q[i][i]).collect(), couplings)?;
        m.truncation_eps = eps;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    /// Per-variable neighbor lists `(j, Q_ij)` covering both orientations.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, v) in &self.couplings {
            adj[i].push((j, v));
            adj[j].push((i, v));
        }
        adj
    }

    /// `C(x) = sum_i Q_ii x_i + 2 sum_{i<j} Q_ij x_i x_j`, constant excluded.
    pub fn cost(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(self.cost_unchecked(x))
    }

    pub(crate) fn cost_unchecked(&self, x: &[u8]) -> f64 {
        let linear: f64 = self
            .diag
            .iter()
            .zip(x)
            .filter(|(_, &b)| b != 0)
            .map(|(q, _)| q)
            .sum();
        let quadratic: f64 = self
            .couplings
            .iter()
            .filter(|&&(i, j, _)| x[i] != 0 && x[j] != 0)
            .map(|&(_, _, v)| v)
            .sum();
        linear + 2.0 * quadratic
    }

    /// Squared L2 residual `const + C(x)`.
    pub fn residual(&self, x: &[u8]) -> Result<f64> {
        Ok(self.constant + self.cost(x)?)
    }

    /// Ising view under `x_i = (1 - s_i) / 2`.
    pub fn to_ising(&self) -> IsingModel {
        let mut h: Vec<f64> = self.diag.iter().map(|q| -q / 2.0).collect();
        let mut offset: f64 = self.diag.iter().sum::<f64>() / 2.0;
        let mut j = Vec::with_capacity(self.couplings.len());
        for &(a, b, v) in &self.couplings {
            h[a] -= v / 2.0;
            h[b] -= v / 2.0;
            offset += v / 2.0;
            j.push((a, b, v / 2.0));
        }
        IsingModel { h, j, offset }
    }

    pub fn write_coo<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# QUBO in COO form: i j Q_ij (i <= j), cost = sum_i Q_ii x_i + 2 sum_i<j Q_ij x_i x_j")?;
        writeln!(w, "# n = {}", self.n)?;
        for (i, v) in self.diag.iter().enumerate() {
            writeln!(w, "{i} {i} {v:e}")?;
        }
        for &(i, j, v) in &self.couplings {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        w.flush()
    }

    /// Read COO entries for an `n`-variable model. Missing diagonal entries
    /// are zero.
    pub fn read_coo<R: BufRead>(reader: R, n: usize) -> Result<Self> {
        let coo = |line, msg: String| Error::Coo { line, msg };
        let mut diag = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut couplings = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(coo(lineno, format!("expected 'i j value', got {t:?}")));
            }
            let i: usize = toks[0].parse().map_err(|_| coo(lineno, "bad row index".into()))?;
            let j: usize = toks[1].parse().map_err(|_| coo(lineno, "bad column index".into()))?;
            let v: f64 = toks[2].parse().map_err(|_| coo(lineno, "bad value".into()))?;
            if i > j {
                return Err(coo(lineno, format!("entry ({i}, {j}) is below the diagonal")));
            }
            if j >= n {
                return Err(coo(lineno, format!("index {j} out of range for n = {n}")));
            }
            if !v.is_finite() {
                return Err(coo(lineno, "non-finite value".into()));
            }
            if i == j {
                if seen[i] {
                    return Err(coo(lineno, format!("duplicate diagonal entry {i}")));
                }
                seen[i] = true;
                diag[i] = v;
            } else {
                couplings.push((i, j, v));
            }
        }
        Self::new(diag, couplings).map_err(|e| coo(0, e.to_string()))
    }
}

/// `E(s) = offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    pub h: Vec<f64>,
    pub j: Vec<(usize, usize, f64)>,
    pub offset: f64,
}

impl IsingModel {
    pub fn energy(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.h.len() {
            return Err(Error::LengthMismatch {
                expected: self.h.len(),
                got: spins.len(),
            });
        }
        let field: f64 = self.h.iter().zip(spins).map(|(h, &s)| h * s as f64).sum();
        let coupling: f64 = self
            .j
            .iter()
            .map(|&(a, b, v)| v * (spins[a] * spins[b]) as f64)
            .sum();
        Ok(self.offset + field + coupling)
    }

    pub fn max_abs_coupling(&self) -> f64 {
        self.j.iter().map(|t| t.2.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_field(&self) -> f64 {
        self.h.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Spin for a bit: `x = 1 <-> s = -1`.
pub fn spins_from_bits(x: &[u8]) -> Vec<i8> {
    x.iter().map(|&b| if b != 0 { -1 } else { 1 }).collect()
}

/// `<G(qi), G(qj)>` for unit-normalized isotropic Gaussians.
pub fn overlap(qi: &Vec3, qj: &Vec3, sigma2: f64) -> f64 {
    (4.0 * PI * sigma2).powf(-1.5) * (-dist2(qi, qj) / (4.0 * sigma2)).exp()
}

/// Unit-normalized isotropic Gaussian evaluated at squared distance `r2`.
#[inline]
pub fn gaussian(r2: f64, sigma2: f64) -> f64 {
    (2.0 * PI * sigma2).powf(-1.5) * (-r2 / (2.0 * sigma2)).exp()
}

/// `<g, G(site)>` as a Riemann sum over source nodes within 6 sigma of the
/// site; nodes outside the grid contribute nothing.
pub fn data_term(site: &Vec3, density: &DensityGrid, sigma2: f64) -> f64 {
    let r = QUADRATURE_RADIUS_SIGMAS * sigma2.sqrt();
    let r2max = r * r;
    let lo = [site[0] - r, site[1] - r, site[2] - r];
    let hi = [site[0] + r, site[1] + r, site[2] + r];
    let [ri, rj, rk] = density.node_range(&lo, &hi);
    let spec = density.spec();
    let norm = (2.0 * PI * sigma2).powf(-1.5);
    let inv = 1.0 / (2.0 * sigma2);
    let mut acc = 0.0;
    for i in ri {
        for j in rj.clone() {
            for k in rk.clone() {
                let g = density.at(i, j, k);
                if g == 0.0 {
                    continue;
                }
                let d2 = dist2(&spec.node(i, j, k), site);
                if d2 <= r2max {
                    acc += g * (-d2 * inv).exp();
                }
            }
        }
    }
    acc * norm * spec.cell_volume()
}

/// `<g, g>` over the nodes inside the pocket box.
pub fn density_norm2(density: &DensityGrid, pocket: &PocketBox) -> f64 {
    let [ri, rj, rk] = density.node_range(&pocket.lower(), &pocket.upper());
    let mut acc = 0.0;
    for i in ri {
        for j in rj.clone() {
            for k in rk.clone() {
                let g = density.at(i, j, k);
                acc += g * g;
            }
        }
    }
    acc * density.spec().cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuboOptions {
    pub truncation_eps: f64,
    /// Global multiplier on every mixture Gaussian.
    pub amplitude: f64,
}

impl Default for QuboOptions {
    fn default() -> Self {
        QuboOptions {
            truncation_eps: DEFAULT_TRUNCATION_EPS,
            amplitude: 1.0,
        }
    }
}

pub fn build_qubo(
    sites: &SiteGrid,
    density: &DensityGrid,
    pocket: &PocketBox,
    opts: &QuboOptions,
) -> Result<QuboModel> {
    if !(opts.truncation_eps >= 0.0) || !(opts.amplitude > 0.0) {
        return Err(Error::InvalidInput(
            "truncation_eps must be >= 0 and amplitude > 0".into(),
        ));
    }
    let s2 = sites.sigma2;
    let a = opts.amplitude;
    let q = &sites.sites;
    let n = q.len();

    let self_overlap = a * a * (4.0 * PI * s2).powf(-1.5);
    let diag: Vec<f64> = q
        .par_iter()
        .map(|site| self_overlap - 2.0 * a * data_term(site, density, s2))
        .collect();

    let rows: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .filter_map(|j| {
                    let v = a * a * overlap(&q[i], &q[j], s2);
                    (v >= opts.truncation_eps && v > 0.0).then_some((i, j, v))
                })
                .collect()
        })
        .collect();
    let couplings: Vec<_> = rows.into_iter().flatten().collect();

    Ok(QuboModel {
        n,
        diag,
        couplings,
        constant: density_norm2(density, pocket),
        truncation_eps: opts.truncation_eps,
    })
}

/// Metadata written next to a COO file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuboSidecar {
    pub n: usize,
    pub constant: f64,
    pub truncation_eps: f64,
    pub sigma2: Option<f64>,
    pub delta: Option<f64>,
    pub tau_g: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
}

impl QuboSidecar {
    pub fn for_model(model: &QuboModel, sites: Option<&SiteGrid>, amplitude: Option<f64>) -> Self {
        QuboSidecar {
            n: model.n(),
            constant: model.constant,
            truncation_eps: model.truncation_eps,
            sigma2: sites.map(|s| s.sigma2),
            delta: sites.map(|s| s.delta),
            tau_g: sites.map(|s| s.tau_g),
            amplitude,
        }
    }
}

/// Write `path` (COO) and its `.json` sidecar.
pub fn save_qubo(
    model: &QuboModel,
    sidecar: &QuboSidecar,
    coo_path: &std::path::Path,
) -> Result<()> {
    let f = std::fs::File::create(coo_path).map_err(|e| Error::from(e).in_file(coo_path))?;
    model
        .write_coo(io::BufWriter::new(f))
        .map_err(|e| Error::from(e).in_file(coo_path))?;
    let json_path = coo_path.with_extension("json");
    let text = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(&json_path, text + "\n").map_err(|e| Error::from(e).in_file(&json_path))?;
    Ok(())
}

/// Read a COO file plus its `.json` sidecar.
pub fn load_qubo(coo_path: &std::path::Path) -> Result<(QuboModel, QuboSidecar)> {
    let json_path = coo_path.with_extension("json");
    let text = std::fs::read_to_string(&json_path).map_err(|e| Error::from(e).in_file(&json_path))?;
    let sidecar: QuboSidecar =
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(&json_path))?;
    let f = std::fs::File::open(coo_path).map_err(|e| Error::from(e).in_file(coo_path))?;
    let mut model = QuboModel::read_coo(io::BufReader::new(f), sidecar.n)
        .map_err(|e| e.in_file(coo_path))?;
    model.constant = sidecar.constant;
    model.truncation_eps = sidecar.truncation_eps;
    Ok((model, sidecar))
}
