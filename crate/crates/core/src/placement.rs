//! Decoding solutions into water oxygen positions, PDB output, and the 2D
//! PCA projection used to compare crystal and predicted waters.

use std::io::{self, Write};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::sitegrid::SiteGrid;
use crate::solvers::Bitstring;
use crate::structure::CrystalWaters;

/// Predicted water oxygens: the sites whose bit is set, in site order.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterPlacement {
    pub positions: Vec<Vec3>,
    pub source_bitstring: Bitstring,
}

impl WaterPlacement {
    pub fn m(&self) -> usize {
        self.positions.len()
    }

    /// Placement from explicit coordinates (e.g. third-party predictions).
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        let n = positions.len();
        WaterPlacement {
            positions,
            source_bitstring: Bitstring(vec![1; n]),
        }
    }
}

pub fn decode(bits: &Bitstring, sites: &SiteGrid) -> Result<WaterPlacement> {
    if bits.len() != sites.len() {
        return Err(Error::LengthMismatch {
            expected: sites.len(),
            got: bits.len(),
        });
    }
    let positions = bits
        .bits()
        .iter()
        .zip(&sites.sites)
        .filter(|(&b, _)| b != 0)
        .map(|(_, &q)| q)
        .collect();
    Ok(WaterPlacement {
        positions,
        source_bitstring: bits.clone(),
    })
}

/// One HETATM HOH oxygen per position, then END.
pub fn write_waters_pdb<W: Write>(placement: &WaterPlacement, mut w: W) -> io::Result<()> {
    for (k, p) in placement.positions.iter().enumerate() {
        let serial = (k + 1) % 100_000;
        let resseq = (k + 1) % 10_000;
        writeln!(
            w,
            "HETATM{serial:>5}  O   HOH W{resseq:>4}    {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}           O",
            p[0], p[1], p[2], 1.0, 0.0
        )?;
    }
    writeln!(w, "END")?;
    w.flush()
}

/// Two leading principal directions of the combined crystal and predicted
/// waters, and both sets projected onto them.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub components: [Vec3; 2],
    pub mean: Vec3,
    pub cw_points: Vec<[f64; 2]>,
    pub pw_points: Vec<[f64; 2]>,
    pub explained_variance_ratio: [f64; 2],
}

impl PcaProjection {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "set,label,pc1,pc2")?;
        for (i, p) in self.cw_points.iter().enumerate() {
            writeln!(w, "CW,{i},{},{}", p[0], p[1])?;
        }
        for (i, p) in self.pw_points.iter().enumerate() {
            writeln!(w, "PW,{i},{},{}", p[0], p[1])?;
        }
        w.flush()
    }
}

pub fn pca_project(cw: &CrystalWaters, pw: &WaterPlacement) -> Result<PcaProjection> {
    pca_points(cw.positions(), &pw.positions)
}

pub fn pca_points(cw: &[Vec3], pw: &[Vec3]) -> Result<PcaProjection> {
    let all: Vec<Vector3<f64>> = cw.iter().chain(pw).map(|p| Vector3::from(*p)).collect();
    if all.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "PCA needs at least 2 points, got {}",
            all.len()
        )));
    }
    let mean = all.iter().sum::<Vector3<f64>>() / all.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &all {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= (all.len() - 1) as f64;
    let total = cov.trace();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("PCA input points are all identical".into()));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let component = |k: usize| -> Vector3<f64> {
        let mut v: Vector3<f64> = eig.eigenvectors.column(order[k]).into_owned();
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v = -v;
        }
        v.normalize()
    };
    let (pc1, pc2) = (component(0), component(1));
    let ratio = |k: usize| (eig.eigenvalues[order[k]].max(0.0) / total).clamp(0.0, 1.0);
    let project = |pts: &[Vec3]| -> Vec<[f64; 2]> {
        pts.iter()
            .map(|p| {
                let d = Vector3::from(*p) - mean;
                [d.dot(&pc1), d.dot(&pc2)]
            })
            .collect()
    };
    Ok(PcaProjection {
        components: [pc1.into(), pc2.into()],
        mean: mean.into(),
        cw_points: project(cw),
        pw_points: project(pw),
        explained_variance_ratio: [ratio(0), ratio(1)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::parse_waters;

    fn grid(sites: Vec<Vec3>) -> SiteGrid {
        SiteGrid {
            sites,
            sigma2: 1.0,
            delta: 1.0,
            tau_g: 0.1,
            source_spacing: [0.5; 3],
        }
    }

    #[test]
    fn decode_cases() {
        let g = grid(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!(decode(&"000".parse().unwrap(), &g).unwrap().positions.is_empty());
        assert_eq!(
            decode(&"010".parse().unwrap(), &g).unwrap().positions,
            vec![[1.0, 0.0, 0.0]]
        );
        assert!(decode(&"01".parse().unwrap(), &g).is_err());
    }

    #[test]
    fn pdb_format() {
        let mut out = Vec::new();
        write_waters_pdb(&WaterPlacement::from_positions(vec![]), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "END\n");

        let mut out = Vec::new();
        write_waters_pdb(&WaterPlacement::from_positions(vec![[1.5, -2.0, 3.25]]), &mut out)
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        let line = text.lines().next().unwrap();
        assert_eq!(&line[0..6], "HETATM");
        assert_eq!(&line[17..20], "HOH");
        assert_eq!(&line[30..38], "   1.500");
        assert_eq!(&line[38..46], "  -2.000");
        assert_eq!(&line[46..54], "   3.250");
        assert_eq!(&line[54..60], "  1.00");
        assert_eq!(&line[60..66], "  0.00");
        let back = parse_waters(text.as_bytes()).unwrap();
        assert_eq!(back.positions(), &[[1.5, -2.0, 3.25]]);
    }

    #[test]
    fn pca_planar_and_two_point() {
        let cw = vec![[0.0, 0.0, 0.0], [1.0, 2.0, 0.0], [3.0, -1.0, 0.0]];
        let pw = vec![[2.0, 2.0, 0.0], [-1.0, 0.5, 0.0]];
        let p = pca_points(&cw, &pw).unwrap();
        let s = p.explained_variance_ratio[0] + p.explained_variance_ratio[1];
        assert!((s - 1.0).abs() < 1e-9);
        assert!(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);

        let p = pca_points(&[[0.0, 0.0, 0.0]], &[[3.0, 4.0, 0.0]]).unwrap();
        let c = p.components[0];
        assert!((c[0] - 0.6).abs() < 1e-9 && (c[1] - 0.8).abs() < 1e-9 && c[2].abs() < 1e-9);
        assert!(p.explained_variance_ratio[1].abs() < 1e-12);
    }

    #[test]
    fn pca_errors() {
        assert!(pca_points(&[[1.0; 3]], &[]).is_err());
        assert!(pca_points(&[[1.0; 3]], &[[1.0; 3]]).is_err());
    }

    #[test]
    fn pca_csv() {
        let p = pca_points(&[[0.0; 3]], &[[1.0, 0.0, 0.0]]).unwrap();
        let mut out = Vec::new();
        p.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("set,label,pc1,pc2\nCW,0,"));
        assert!(text.contains("\nPW,0,"));
    }
}
