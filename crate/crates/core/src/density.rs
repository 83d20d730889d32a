//! Regular 3D scalar density grids and the OpenDX text format.
//!
//! Values are stored z-fastest: the node `(i, j, k)` lives at flat index
//! `(i * ny + j) * nz + k`, which is the standard OpenDX ordering.

use std::io::{self, BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{dist2, Vec3};
use crate::seed::rng_from;

/// Geometry of a regular, axis-aligned grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub counts: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, spacing: Vec3, counts: [usize; 3]) -> Result<Self> {
        let spec = GridSpec {
            origin,
            spacing,
            counts,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        if !self.spacing.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.counts.iter().any(|&c| c < 2) {
            return Err(Error::InvalidInput(format!(
                "grid counts must all be >= 2, got {:?}",
                self.counts
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Upper corner of the bounding box (last node).
    pub fn upper(&self) -> Vec3 {
        self.node(self.counts[0] - 1, self.counts[1] - 1, self.counts[2] - 1)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Continuous index coordinate of `p` along `axis`. Values within 1e-9 of
    /// an integer are snapped so node queries hit nodes exactly.
    #[inline]
    pub(crate) fn fractional(&self, p: &Vec3, axis: usize) -> f64 {
        let f = (p[axis] - self.origin[axis]) / self.spacing[axis];
        let r = f.round();
        if (f - r).abs() < 1e-9 {
            r
        } else {
            f
        }
    }

    /// Lower node index and offset of the cell enclosing `p` along every
    /// axis, or `None` if `p` is outside the bounding box. A point on the
    /// upper face belongs to the last cell.
    pub(crate) fn enclosing_cell(&self, p: &Vec3) -> Option<([usize; 3], Vec3)> {
        let mut lo = [0usize; 3];
        let mut t = [0.0; 3];
        for axis in 0..3 {
            let f = self.fractional(p, axis);
            let last = (self.counts[axis] - 1) as f64;
            if !(0.0..=last).contains(&f) {
                return None;
            }
            let i0 = (f.floor() as usize).min(self.counts[axis] - 2);
            lo[axis] = i0;
            t[axis] = f - i0 as f64;
        }
        Some((lo, t))
    }
}

/// Regular 3D scalar field g(r), dimensionless density ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::LengthMismatch {
                expected: spec.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "density values must be finite and non-negative, found {v}"
            )));
        }
        Ok(DensityGrid { spec, values })
    }

    /// Build a grid by evaluating `f` at every node.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(Vec3) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.len());
        for i in 0..spec.counts[0] {
            for j in 0..spec.counts[1] {
                for k in 0..spec.counts[2] {
                    values.push(f(spec.node(i, j, k)));
                }
            }
        }
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn origin(&self) -> Vec3 {
        self.spec.origin
    }

    pub fn spacing(&self) -> Vec3 {
        self.spec.spacing
    }

    pub fn counts(&self) -> [usize; 3] {
        self.spec.counts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.spec.enclosing_cell(p).is_some()
    }

    /// Maximum over the 8 nodes of the cell enclosing `p`, `None` outside.
    pub fn cell_max(&self, p: &Vec3) -> Option<f64> {
        let (lo, _) = self.spec.enclosing_cell(p)?;
        let mut m = f64::NEG_INFINITY;
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    m = m.max(self.at(lo[0] + di, lo[1] + dj, lo[2] + dk));
                }
            }
        }
        Some(m)
    }

    /// Trilinear interpolation of the 8 nodes enclosing `p`.
    pub fn interpolate(&self, p: &Vec3) -> Result<f64> {
        let (lo, t) = self.spec.enclosing_cell(p).ok_or(Error::OutOfBounds {
            x: p[0],
            y: p[1],
            z: p[2],
        })?;
        let mut acc = 0.0;
        for di in 0..2 {
            let wx = if di == 0 { 1.0 - t[0] } else { t[0] };
            if wx == 0.0 {
                continue;
            }
            for dj in 0..2 {
                let wy = if dj == 0 { 1.0 - t[1] } else { t[1] };
                if wy == 0.0 {
                    continue;
                }
                for dk in 0..2 {
                    let wz = if dk == 0 { 1.0 - t[2] } else { t[2] };
                    if wz == 0.0 {
                        continue;
                    }
                    acc += wx * wy * wz * self.at(lo[0] + di, lo[1] + dj, lo[2] + dk);
                }
            }
        }
        Ok(acc)
    }

    /// Node index ranges (inclusive lower, exclusive upper) covering the
    /// axis-aligned box `[lo, hi]`, clipped to the grid.
    pub(crate) fn node_range(&self, lo: &Vec3, hi: &Vec3) -> [std::ops::Range<usize>; 3] {
        let range = |axis: usize| {
            let s = &self.spec;
            let a = ((lo[axis] - s.origin[axis]) / s.spacing[axis] - 1e-9).ceil();
            let b = ((hi[axis] - s.origin[axis]) / s.spacing[axis] + 1e-9).floor();
            let a = a.max(0.0) as usize;
            let b = (b.max(-1.0) + 1.0) as usize;
            a..b.min(s.counts[axis]).max(a)
        };
        [range(0), range(1), range(2)]
    }
}

/// Parse an OpenDX scalar field.
pub fn parse_dx<R: BufRead>(reader: R) -> Result<DensityGrid> {
    let mut counts: Option<[usize; 3]> = None;
    let mut origin: Option<Vec3> = None;
    let mut deltas: Vec<Vec3> = Vec::with_capacity(3);
    let mut items: Option<usize> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut in_data = false;
    let mut data_done = false;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }

        if in_data {
            let first = trimmed.split_whitespace().next().unwrap_or("");
            if first.parse::<f64>().is_err() {
                in_data = false;
                data_done = true;
            } else {
                for tok in trimmed.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::dx(lineno, format!("invalid data value {tok:?}")))?;
                    if !v.is_finite() {
                        return Err(Error::dx(lineno, format!("non-finite density value {tok}")));
                    }
                    if v < 0.0 {
                        return Err(Error::dx(lineno, format!("negative density value {tok}")));
                    }
                    values.push(v);
                }
                continue;
            }
        }

        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match toks[0] {
            "object" if trimmed.contains("gridpositions") => {
                counts = Some(parse_counts(&toks, lineno)?);
            }
            "object" if trimmed.contains("gridconnections") => {
                let c = parse_counts(&toks, lineno)?;
                if counts.is_some_and(|p| p != c) {
                    return Err(Error::dx(
                        lineno,
                        "gridconnections counts disagree with gridpositions",
                    ));
                }
            }
            "object" if trimmed.contains("data follows") => {
                if data_done {
                    return Err(Error::dx(lineno, "multiple data arrays are not supported"));
                }
                let pos = toks
                    .iter()
                    .position(|t| *t == "items")
                    .ok_or_else(|| Error::dx(lineno, "array header lacks 'items'"))?;
                let n = toks
                    .get(pos + 1)
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| Error::dx(lineno, "invalid item count"))?;
                if trimmed.contains("binary") || trimmed.contains("msb") || trimmed.contains("lsb") {
                    return Err(Error::dx(lineno, "binary DX data is not supported"));
                }
                items = Some(n);
                in_data = true;
            }
            "origin" => {
                origin = Some(parse_vec3(&toks[1..], lineno, "origin")?);
            }
            "delta" => {
                if deltas.len() == 3 {
                    return Err(Error::dx(lineno, "more than three delta rows"));
                }
                deltas.push(parse_vec3(&toks[1..], lineno, "delta")?);
            }
            "attribute" if trimmed.contains("ordering") => {
                return Err(Error::dx(lineno, "custom data ordering is not supported"));
            }
            "object" | "attribute" | "component" => {}
            other => return Err(Error::dx(lineno, format!("unexpected header token {other:?}"))),
        }
    }

    let counts = counts.ok_or_else(|| Error::dx(0, "missing gridpositions header"))?;
    let origin = origin.ok_or_else(|| Error::dx(0, "missing origin"))?;
    if deltas.len() != 3 {
        return Err(Error::dx(0, format!("expected 3 delta rows, found {}", deltas.len())));
    }
    let mut spacing = [0.0; 3];
    for (axis, row) in deltas.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if c == axis {
                spacing[axis] = v;
            } else if v != 0.0 {
                return Err(Error::dx(
                    0,
                    format!("delta row {} is not axis-aligned: {:?}", axis + 1, row),
                ));
            }
        }
    }
    let items = items.ok_or_else(|| Error::dx(0, "missing data array"))?;
    let expected: usize = counts.iter().product();
    if items != expected {
        return Err(Error::dx(
            0,
            format!("array declares {items} items but grid has {expected} points"),
        ));
    }
    if values.len() != expected {
        return Err(Error::dx(
            0,
            format!("count mismatch: expected {expected} values, found {}", values.len()),
        ));
    }
    let spec = GridSpec::new(origin, spacing, counts).map_err(|e| Error::dx(0, e.to_string()))?;
    DensityGrid::new(spec, values)
}

fn parse_counts(toks: &[&str], lineno: usize) -> Result<[usize; 3]> {
    let pos = toks
        .iter()
        .position(|t| *t == "counts")
        .ok_or_else(|| Error::dx(lineno, "missing 'counts'"))?;
    let mut c = [0usize; 3];
    for (k, slot) in c.iter_mut().enumerate() {
        *slot = toks
            .get(pos + 1 + k)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::dx(lineno, "invalid counts"))?;
    }
    if toks.len() > pos + 4 {
        return Err(Error::dx(lineno, "only 3D grids are supported"));
    }
    Ok(c)
}

fn parse_vec3(toks: &[&str], lineno: usize, what: &str) -> Result<Vec3> {
    if toks.len() != 3 {
        return Err(Error::dx(lineno, format!("{what} needs 3 components")));
    }
    let mut v = [0.0f64; 3];
    for (k, t) in toks.iter().enumerate() {
        v[k] = t
            .parse()
            .map_err(|_| Error::dx(lineno, format!("invalid {what} component {t:?}")))?;
        if !v[k].is_finite() {
            return Err(Error::dx(lineno, format!("non-finite {what} component")));
        }
    }
    Ok(v)
}

/// Write `grid` as an OpenDX scalar field, three values per line.
pub fn write_dx<W: Write>(grid: &DensityGrid, mut w: W) -> io::Result<()> {
    let s = grid.spec();
    let [nx, ny, nz] = s.counts;
    writeln!(w, "# hydroqubo density grid")?;
    writeln!(w, "object 1 class gridpositions counts {nx} {ny} {nz}")?;
    writeln!(w, "origin {:e} {:e} {:e}", s.origin[0], s.origin[1], s.origin[2])?;
    writeln!(w, "delta {:e} 0 0", s.spacing[0])?;
    writeln!(w, "delta 0 {:e} 0", s.spacing[1])?;
    writeln!(w, "delta 0 0 {:e}", s.spacing[2])?;
    writeln!(w, "object 2 class gridconnections counts {nx} {ny} {nz}")?;
    writeln!(
        w,
        "object 3 class array type double rank 0 items {} data follows",
        s.len()
    )?;
    for chunk in grid.values().chunks(3) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:.10e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    writeln!(w, "attribute \"dep\" string \"positions\"")?;
    writeln!(w, "object \"density\" class field")?;
    writeln!(w, "component \"positions\" value 1")?;
    writeln!(w, "component \"connections\" value 2")?;
    writeln!(w, "component \"data\" value 3")?;
    w.flush()
}

/// Density that is a known sum of peak-`amplitude` isotropic Gaussians of
/// variance `sigma2`, plus uniform noise in `[0, noise_level]`.
pub fn synthesize_planted(
    sites: &[Vec3],
    amplitude: f64,
    sigma2: f64,
    spec: GridSpec,
    noise_level: f64,
    seed: u64,
) -> Result<DensityGrid> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(amplitude >= 0.0) || !(noise_level >= 0.0) {
        return Err(Error::InvalidInput(
            "amplitude and noise level must be non-negative".into(),
        ));
    }
    spec.validate()?;
    let upper = spec.upper();
    for s in sites {
        if (0..3).any(|a| s[a] < spec.origin[a] || s[a] > upper[a]) {
            return Err(Error::InvalidInput(format!("planted site {s:?} outside the grid box")));
        }
    }
    let mut rng = rng_from(seed);
    let inv = 1.0 / (2.0 * sigma2);
    DensityGrid::from_fn(spec, |p| {
        let signal: f64 = sites.iter().map(|s| (-dist2(&p, s) * inv).exp()).sum();
        let noise = if noise_level > 0.0 {
            rng.random::<f64>() * noise_level
        } else {
            0.0
        };
        amplitude * signal + noise
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# comment
object 1 class gridpositions counts 2 2 2
origin 0 0 0
delta 0.5 0 0
delta 0 0.5 0
delta 0 0 0.5
object 2 class gridconnections counts 2 2 2
object 3 class array type double rank 0 items 8 data follows
0 1 2
3 4 5
6 7
attribute \"dep\" string \"positions\"
object \"density\" class field
";

    fn spec(counts: [usize; 3], h: f64) -> GridSpec {
        GridSpec::new([0.0; 3], [h; 3], counts).unwrap()
    }

    #[test]
    fn parses_minimal_file() {
        let g = parse_dx(MINIMAL.as_bytes()).unwrap();
        assert_eq!(g.counts(), [2, 2, 2]);
        assert_eq!(g.spacing(), [0.5; 3]);
        assert_eq!(g.values().len(), 8);
        // z fastest
        assert_eq!(g.at(0, 0, 1), 1.0);
        assert_eq!(g.at(1, 0, 0), 4.0);
    }

    #[test]
    fn rejects_count_mismatch() {
        let bad = MINIMAL.replace("6 7\n", "6\n");
        let err = parse_dx(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("count mismatch"), "{err}");
    }

    #[test]
    fn rejects_large_grid_one_short() {
        let n = 12usize;
        let mut text = format!(
            "object 1 class gridpositions counts {n} {n} {n}\norigin 0 0 0\ndelta 0.5 0 0\ndelta 0 0.5 0\ndelta 0 0 0.5\nobject 3 class array type double rank 0 items {} data follows\n",
            n * n * n
        );
        for _ in 0..n * n * n - 1 {
            text.push_str("1.0\n");
        }
        assert!(matches!(parse_dx(text.as_bytes()), Err(Error::Dx { .. })));
    }

    #[test]
    fn rejects_rotated_deltas_and_negative_values() {
        let rotated = MINIMAL.replace("delta 0 0.5 0", "delta 0.1 0.5 0");
        assert!(parse_dx(rotated.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("axis-aligned"));
        let negative = MINIMAL.replace("3 4 5", "3 -4 5");
        assert!(parse_dx(negative.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("negative"));
    }

    #[test]
    fn rejects_malformed_header() {
        let bad = MINIMAL.replace("origin 0 0 0", "origin 0 0");
        assert!(parse_dx(bad.as_bytes()).is_err());
        let missing = MINIMAL.replace("origin 0 0 0\n", "");
        assert!(parse_dx(missing.as_bytes()).is_err());
    }

    #[test]
    fn writer_emits_header_and_ordering() {
        let g = DensityGrid::new(spec([2, 2, 2], 1.0), (0..8).map(f64::from).collect()).unwrap();
        let mut out = Vec::new();
        write_dx(&g, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let data: Vec<f64> = text
            .lines()
            .skip_while(|l| !l.contains("data follows"))
            .skip(1)
            .take_while(|l| !l.starts_with("attribute"))
            .flat_map(|l| l.split_whitespace().map(|t| t.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(data, (0..8).map(f64::from).collect::<Vec<_>>());

        let g = DensityGrid::new(spec([3, 4, 5], 1.0), vec![0.0; 60]).unwrap();
        let mut out = Vec::new();
        write_dx(&g, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("counts 3 4 5"));
    }

    #[test]
    fn interpolation_cases() {
        let s = spec([3, 3, 3], 0.5);
        let g = DensityGrid::from_fn(s, |p| p[0]).unwrap();
        assert!((g.interpolate(&[0.75, 0.3, 0.1]).unwrap() - 0.75).abs() < 1e-12);

        let g = DensityGrid::from_fn(s, |p| 1.0 + p[0] * 7.0 + p[1] * p[2]).unwrap();
        assert_eq!(g.interpolate(&[0.5, 1.0, 0.5]).unwrap(), g.at(1, 2, 1));

        let c = DensityGrid::from_fn(s, |_| 2.5).unwrap();
        assert!((c.interpolate(&[0.33, 0.91, 0.12]).unwrap() - 2.5).abs() < 1e-12);

        assert!(matches!(g.interpolate(&[1.2, 0.0, 0.0]), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn planted_closed_forms() {
        let s = GridSpec::new([0.0; 3], [0.5; 3], [21, 21, 21]).unwrap();
        let g = synthesize_planted(&[[5.0, 5.0, 5.0]], 1.0, 1.0, s, 0.0, 0).unwrap();
        let (imax, _) = g
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert_eq!(imax, s.index(10, 10, 10));

        let empty = synthesize_planted(&[], 1.0, 1.0, s, 0.0, 0).unwrap();
        assert!(empty.values().iter().all(|&v| v == 0.0));

        let amp = 1.7;
        let two = synthesize_planted(&[[2.0, 5.0, 5.0], [8.0, 5.0, 5.0]], amp, 1.0, s, 0.0, 0)
            .unwrap();
        let mid = two.at(10, 10, 10);
        assert!((mid - 2.0 * amp * (-4.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let s = spec([4, 4, 4], 1.0);
        let a = synthesize_planted(&[], 1.0, 1.0, s, 0.3, 11).unwrap();
        let b = synthesize_planted(&[], 1.0, 1.0, s, 0.3, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| (0.0..=0.3).contains(&v)));
    }
}
