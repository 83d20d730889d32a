//! Crystal-water extraction from PDB files and the pocket subdomain.
//!
//! Only the fixed-width ATOM/HETATM columns are read:
//!
//! | Columns | Field                |
//! |---------|----------------------|
//! | 1 - 6   | record name          |
//! | 13 - 16 | atom name            |
//! | 17      | alternate location   |
//! | 18 - 20 | residue name         |
//! | 31 - 54 | x, y, z (8.3 each)   |

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::geom::{centroid, dist2, is_finite, Vec3};

pub const DEFAULT_POCKET_SIDE: f64 = 15.0;
const DUPLICATE_RADIUS: f64 = 0.1;

/// Oxygen positions of crystallographic waters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrystalWaters {
    positions: Vec<Vec3>,
}

impl CrystalWaters {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        for (i, p) in positions.iter().enumerate() {
            if !is_finite(p) {
                return Err(Error::InvalidInput(format!("water {i} has non-finite coordinates")));
            }
        }
        if let Some((i, j)) = find_duplicate(&positions) {
            return Err(Error::InvalidInput(format!(
                "waters {i} and {j} are closer than {DUPLICATE_RADIUS} Å"
            )));
        }
        Ok(CrystalWaters { positions })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn find_duplicate(positions: &[Vec3]) -> Option<(usize, usize)> {
    let r2 = DUPLICATE_RADIUS * DUPLICATE_RADIUS;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if dist2(&positions[i], &positions[j]) < r2 {
                return Some((i, j));
            }
        }
    }
    None
}

/// Cubic pocket subdomain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PocketBox {
    pub center: Vec3,
    pub side: f64,
}

impl PocketBox {
    pub fn new(center: Vec3, side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidInput(format!("pocket side must be positive, got {side}")));
        }
        if !is_finite(&center) {
            return Err(Error::InvalidInput("pocket center must be finite".into()));
        }
        Ok(PocketBox { center, side })
    }

    pub fn lower(&self) -> Vec3 {
        let h = self.side / 2.0;
        [self.center[0] - h, self.center[1] - h, self.center[2] - h]
    }

    pub fn upper(&self) -> Vec3 {
        let h = self.side / 2.0;
        [self.center[0] + h, self.center[1] + h, self.center[2] + h]
    }

    /// Closed-interval membership.
    pub fn contains(&self, p: &Vec3) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
    }
}

/// Oxygen positions of HOH/WAT residues from ATOM/HETATM records.
pub fn parse_waters<R: BufRead>(reader: R) -> Result<CrystalWaters> {
    let mut positions = Vec::new();
    let mut linenos = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if !(line.starts_with("ATOM") || line.starts_with("HETATM")) {
            continue;
        }
        let resname = field(&line, 17, 20).trim();
        if resname != "HOH" && resname != "WAT" {
            continue;
        }
        if !field(&line, 12, 16).trim().starts_with('O') {
            continue;
        }
        let altloc = field(&line, 16, 17);
        if !(altloc.trim().is_empty() || altloc == "A") {
            continue;
        }
        if line.len() < 54 {
            return Err(Error::pdb(lineno, "record too short for coordinate columns 31-54"));
        }
        let mut p = [0.0f64; 3];
        for (k, (a, b)) in [(30, 38), (38, 46), (46, 54)].into_iter().enumerate() {
            let raw = field(&line, a, b);
            p[k] = raw
                .trim()
                .parse()
                .map_err(|_| Error::pdb(lineno, format!("invalid coordinate {raw:?}")))?;
            if !p[k].is_finite() {
                return Err(Error::pdb(lineno, "non-finite coordinate"));
            }
        }
        positions.push(p);
        linenos.push(lineno);
    }
    if let Some((i, j)) = find_duplicate(&positions) {
        return Err(Error::pdb(
            linenos[j],
            format!(
                "duplicate water within {DUPLICATE_RADIUS} Å of the record at line {}",
                linenos[i]
            ),
        ));
    }
    CrystalWaters::new(positions)
}

fn field(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    line.get(start.min(end)..end).unwrap_or("")
}

/// Cube of side `side` centered on the water centroid.
pub fn pocket_from_waters(waters: &CrystalWaters, side: f64) -> Result<PocketBox> {
    let center = centroid(waters.positions())
        .ok_or_else(|| Error::InvalidInput("cannot center a pocket on zero waters".into()))?;
    PocketBox::new(center, side)
}

pub fn filter_to_box(waters: &CrystalWaters, pocket: &PocketBox) -> CrystalWaters {
    CrystalWaters {
        positions: waters
            .positions()
            .iter()
            .copied()
            .filter(|p| pocket.contains(p))
            .collect(),
    }
}
