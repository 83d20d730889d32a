//! Scoring predicted waters (PW) against crystallographic waters (CW).
//!
//! Every CW owns the cluster of PWs within `R_s` of it (closed ball; a PW may
//! sit in several clusters). With `S_ij = 1 / (1 + |a_i - b_j|)`:
//!
//! * `C    = n* / n`, `n*` the number of non-empty clusters;
//! * `P*   = (1/n) sum_i max_j S_ij`, empty clusters contributing 0;
//! * `<P>  = mean over non-empty clusters of the within-cluster mean of S`;
//! * `<CS> = mean cluster size over non-empty clusters`.
//!
//! Confidence half-widths are `1.96 sd / sqrt(n*)` with the sample standard
//! deviation over clusters (0 when `n* < 2`).

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{dist, Vec3};
use crate::placement::WaterPlacement;
use crate::structure::CrystalWaters;

pub const DEFAULT_CLUSTER_RADIUS: f64 = 3.0;
const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cw_index: usize,
    /// Indices into the predicted waters, ascending.
    pub members: Vec<usize>,
    /// `S_ij` per member, aligned with `members`.
    pub scores: Vec<f64>,
    /// Best member score, 0 for an empty cluster.
    pub best_score: f64,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[inline]
pub fn precision_score(d: f64) -> f64 {
    1.0 / (1.0 + d)
}

/// Clusters of PWs around every CW, found through a uniform cell list of
/// cell size `r_s`.
pub fn build_clusters(cw: &CrystalWaters, pw: &WaterPlacement, r_s: f64) -> Result<Vec<Cluster>> {
    if cw.is_empty() {
        return Err(Error::Evaluation("no crystal waters to score against".into()));
    }
    if !(r_s > 0.0) || !r_s.is_finite() {
        return Err(Error::InvalidInput(format!("cluster radius must be positive, got {r_s}")));
    }
    let cell = |p: &Vec3| -> [i64; 3] {
        [
            (p[0] / r_s).floor() as i64,
            (p[1] / r_s).floor() as i64,
            (p[2] / r_s).floor() as i64,
        ]
    };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (j, b) in pw.positions.iter().enumerate() {
        cells.entry(cell(b)).or_default().push(j);
    }

    let clusters = cw
        .positions()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let c = cell(a);
            let mut members = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(js) = cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            members.extend(
                                js.iter().copied().filter(|&j| dist(a, &pw.positions[j]) <= r_s),
                            );
                        }
                    }
                }
            }
            members.sort_unstable();
            let scores: Vec<f64> = members
                .iter()
                .map(|&j| precision_score(dist(a, &pw.positions[j])))
                .collect();
            let best_score = scores.iter().copied().fold(0.0, f64::max);
            Cluster {
                cw_index: i,
                members,
                scores,
                best_score,
            }
        })
        .collect();
    Ok(clusters)
}

/// Mean with a 95% confidence half-width and coefficient of variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
    pub cv: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Estimate {
            mean,
            ci95: Z95 * sd / k.sqrt(),
            cv: if mean != 0.0 { sd / mean } else { 0.0 },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub m: usize,
    pub n_star: usize,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "P_star")]
    pub p_star: f64,
    /// `None` when no CW was identified.
    #[serde(rename = "P")]
    pub p_mean: Option<Estimate>,
    #[serde(rename = "CS")]
    pub cs_mean: Option<Estimate>,
    /// Set when `<P>` and `<CS>` are undefined (no PW or no identified CW).
    pub degenerate: bool,
    pub r_s: f64,
    pub clusters: Vec<Cluster>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "C,P_star,P_mean,P_ci95,CS_mean,CS_ci95,cv_P,cv_CS,n,m,n_star";

    /// One flat CSV row; undefined statistics are left empty.
    pub fn csv_row(&self) -> String {
        let opt = |e: Option<Estimate>, f: fn(&Estimate) -> f64| {
            e.map(|e| f(&e).to_string()).unwrap_or_default()
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.c,
            self.p_star,
            opt(self.p_mean, |e| e.mean),
            opt(self.p_mean, |e| e.ci95),
            opt(self.cs_mean, |e| e.mean),
            opt(self.cs_mean, |e| e.ci95),
            opt(self.p_mean, |e| e.cv),
            opt(self.cs_mean, |e| e.cv),
            self.n,
            self.m,
            self.n_star
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())?;
        w.flush()
    }
}

pub fn compute_metrics(clusters: Vec<Cluster>, n: usize, m: usize, r_s: f64) -> MetricsReport {
    let identified: Vec<&Cluster> = clusters.iter().filter(|c| c.size() > 0).collect();
    let n_star = identified.len();
    let nf = n.max(1) as f64;
    let c = n_star as f64 / nf;
    let p_star = clusters.iter().map(|c| c.best_score).sum::<f64>() / nf;

    let per_cluster_p: Vec<f64> = identified
        .iter()
        .map(|c| c.scores.iter().sum::<f64>() / c.size() as f64)
        .collect();
    let sizes: Vec<f64> = identified.iter().map(|c| c.size() as f64).collect();
    let p_mean = Estimate::from_samples(&per_cluster_p);
    let cs_mean = Estimate::from_samples(&sizes);

    MetricsReport {
        n,
        m,
        n_star,
        c,
        p_star,
        p_mean,
        cs_mean,
        degenerate: m == 0 || n_star == 0,
        r_s,
        clusters,
    }
}

/// Clusters plus metrics in one call.
pub fn score(cw: &CrystalWaters, pw: &WaterPlacement, r_s: f64) -> Result<MetricsReport> {
    let clusters = build_clusters(cw, pw, r_s)?;
    Ok(compute_metrics(clusters, cw.len(), pw.m(), r_s))
}
