//! Candidate hydration sites: a regular lattice over the pocket, reduced to
//! the points that sit on or next to appreciable density.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::structure::PocketBox;

/// Ordered candidate sites; one QUBO variable per site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGrid {
    pub sites: Vec<Vec3>,
    pub sigma2: f64,
    pub delta: f64,
    pub tau_g: f64,
    pub source_spacing: Vec3,
}

impl SiteGrid {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "index,x,y,z")?;
        for (i, s) in self.sites.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", s[0], s[1], s[2])?;
        }
        w.flush()
    }
}

/// Number of lattice points along one axis of a box of side `side`.
fn points_per_axis(side: f64, delta: f64) -> usize {
    (side / delta + 1e-9).floor() as usize + 1
}

/// Lattice anchored at the pocket's lower corner with spacing `delta`; a
/// point is kept iff the maximum density over the 8 nodes of its enclosing
/// source cell is at least `tau_g`. Points outside the density domain are
/// dropped. Sites are ordered lexicographically by lattice index (x, y, z).
pub fn build_site_grid(
    density: &DensityGrid,
    pocket: &PocketBox,
    delta: f64,
    tau_g: f64,
    sigma2: f64,
) -> Result<SiteGrid> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(tau_g >= 0.0) || !tau_g.is_finite() {
        return Err(Error::InvalidInput(format!("tau_g must be non-negative, got {tau_g}")));
    }
    let (lo, hi) = (pocket.lower(), pocket.upper());
    let (dlo, dhi) = (density.origin(), density.spec().upper());
    if (0..3).any(|a| hi[a] < dlo[a] || lo[a] > dhi[a]) {
        return Err(Error::InvalidInput(
            "pocket box does not intersect the density grid".into(),
        ));
    }

    let m = points_per_axis(pocket.side, delta);
    let total = m * m * m;
    let scored: Vec<Option<(Vec3, f64)>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let (i, j, k) = (flat / (m * m), (flat / m) % m, flat % m);
            let q = [
                lo[0] + i as f64 * delta,
                lo[1] + j as f64 * delta,
                lo[2] + k as f64 * delta,
            ];
            density.cell_max(&q).map(|g| (q, g))
        })
        .collect();

    let max_density = scored.iter().flatten().map(|(_, g)| *g).fold(0.0, f64::max);
    let sites: Vec<Vec3> = scored
        .into_iter()
        .flatten()
        .filter(|(_, g)| *g >= tau_g)
        .map(|(q, _)| q)
        .collect();
    if sites.is_empty() {
        return Err(Error::EmptySiteGrid { tau_g, max_density });
    }
    Ok(SiteGrid {
        sites,
        sigma2,
        delta,
        tau_g,
        source_spacing: density.spacing(),
    })
}
