//! Config-driven end-to-end runs and parameter sweeps.
//!
//! A run reads a density map and a crystal structure, builds the site grid
//! and QUBO, solves it, decodes and scores the placement, and writes every
//! intermediate artifact to `output_dir`. All randomness comes from the root
//! `seed` through [`derive_seed`].

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::density::{parse_dx, DensityGrid};
use crate::error::{Error, Result};
use crate::evaluation::{score, MetricsReport, DEFAULT_CLUSTER_RADIUS};
use crate::placement::{decode, pca_project, write_waters_pdb};
use crate::qubo::{build_qubo, save_qubo, QuboModel, QuboOptions, QuboSidecar, DEFAULT_TRUNCATION_EPS};
use crate::resources::{
    estimate_gates, GateEstimate, ScalingReport, DEFAULT_GATES_PER_EDGE, DEFAULT_ROUTING_FACTOR,
    DEFAULT_TARGET_N,
};
use crate::seed::derive_seed;
use crate::sitegrid::build_site_grid;
use crate::solvers::{
    solve_exact, solve_greedy, solve_qaoa_sim, solve_sa, QaoaParams, SaParams, SolveResult,
    EXACT_MAX_VARS, QAOA_MAX_VARS,
};
use crate::structure::{filter_to_box, parse_waters, pocket_from_waters, CrystalWaters, PocketBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Sa,
    Greedy,
    Qaoa,
    /// Exact up to its variable cap, annealing beyond.
    Auto,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Exact => "exact",
            SolverKind::Sa => "sa",
            SolverKind::Greedy => "greedy",
            SolverKind::Qaoa => "qaoa",
            SolverKind::Auto => "auto",
        }
    }

    pub fn resolve(self, n: usize) -> SolverKind {
        match self {
            SolverKind::Auto if n <= EXACT_MAX_VARS => SolverKind::Exact,
            SolverKind::Auto => SolverKind::Sa,
            k => k,
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(json!(s))
            .map_err(|_| Error::Config(format!("unknown solver '{s}' (exact, sa, greedy, qaoa, auto)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FromWaters {
    #[serde(rename = "from-waters")]
    FromWaters,
}

/// Pocket center: explicit coordinates or the crystal-water centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PocketSpec {
    Center([f64; 3]),
    Derived(FromWaters),
}

impl Default for PocketSpec {
    fn default() -> Self {
        PocketSpec::Derived(FromWaters::FromWaters)
    }
}

fn default_side() -> f64 {
    crate::structure::DEFAULT_POCKET_SIDE
}
fn default_solver() -> SolverKind {
    SolverKind::Auto
}
fn default_truncation_eps() -> f64 {
    DEFAULT_TRUNCATION_EPS
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_cluster_radius() -> f64 {
    DEFAULT_CLUSTER_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub density_path: PathBuf,
    pub pdb_path: PathBuf,
    #[serde(default)]
    pub pocket: PocketSpec,
    #[serde(default = "default_side")]
    pub side: f64,
    pub delta: f64,
    pub tau_g: f64,
    pub sigma2: f64,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_reads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_hot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_cold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qaoa_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_truncation_eps")]
    pub truncation_eps: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_cluster_radius")]
    pub cluster_radius: f64,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_json_str(&text).map_err(|e| e.in_file(path))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("delta", self.delta)?;
        positive("sigma2", self.sigma2)?;
        positive("side", self.side)?;
        positive("amplitude", self.amplitude)?;
        positive("cluster_radius", self.cluster_radius)?;
        if !(self.tau_g >= 0.0) || !self.tau_g.is_finite() {
            return Err(Error::Config(format!("tau_g must be >= 0, got {}", self.tau_g)));
        }
        if !(self.truncation_eps >= 0.0) {
            return Err(Error::Config(format!(
                "truncation_eps must be >= 0, got {}",
                self.truncation_eps
            )));
        }
        for (name, v) in [
            ("num_reads", self.num_reads),
            ("sweeps", self.sweeps),
            ("qaoa_layers", self.qaoa_layers),
            ("shots", self.shots),
        ] {
            if v == Some(0) {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if let PocketSpec::Center(c) = self.pocket {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("pocket center must be finite".into()));
            }
        }
        if let (Some(h), Some(c)) = (self.beta_hot, self.beta_cold) {
            if !(0.0 < h && h < c) {
                return Err(Error::Config(format!(
                    "need 0 < beta_hot < beta_cold, got {h} and {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            num_reads: self.num_reads,
            sweeps: self.sweeps,
            beta_hot: self.beta_hot,
            beta_cold: self.beta_cold,
            qaoa_layers: self.qaoa_layers,
            shots: self.shots,
            max_iters: self.max_iters,
        }
    }
}

/// Optional solver parameters; unset fields take the solver defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub num_reads: Option<usize>,
    pub sweeps: Option<usize>,
    pub beta_hot: Option<f64>,
    pub beta_cold: Option<f64>,
    pub qaoa_layers: Option<usize>,
    pub shots: Option<usize>,
    pub max_iters: Option<usize>,
}

impl SolverSettings {
    fn sa_params(&self, seed: u64) -> SaParams {
        let d = SaParams::default();
        SaParams {
            num_reads: self.num_reads.unwrap_or(d.num_reads),
            sweeps: self.sweeps.unwrap_or(d.sweeps),
            beta_hot: self.beta_hot,
            beta_cold: self.beta_cold,
            seed,
        }
    }

    fn qaoa_params(&self, seed: u64) -> QaoaParams {
        let d = QaoaParams::default();
        QaoaParams {
            layers: self.qaoa_layers.unwrap_or(d.layers),
            shots: self.shots.unwrap_or(d.shots),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            seed,
            ..d
        }
    }
}

/// Parsed inputs shared by every run over the same files.
pub struct Inputs {
    pub density: DensityGrid,
    pub waters: CrystalWaters,
}

impl Inputs {
    pub fn load(density_path: &Path, pdb_path: &Path) -> Result<Self> {
        Ok(Inputs {
            density: read_density(density_path)?,
            waters: read_waters(pdb_path)?,
        })
    }
}

pub fn read_density(path: &Path) -> Result<DensityGrid> {
    let f = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_dx(BufReader::new(f)).map_err(|e| e.in_file(path))
}

pub fn read_waters(path: &Path) -> Result<CrystalWaters> {
    let f = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_waters(BufReader::new(f)).map_err(|e| e.in_file(path))
}

/// Solve `model` with `kind` (resolved against the model size), seeding
/// the solver from `root_seed` under the component name `solver.<kind>`.
pub fn solve_with(model: &QuboModel, kind: SolverKind, root_seed: u64, settings: &SolverSettings) -> Result<SolveResult> {
    let kind = kind.resolve(model.n());
    let seed = derive_seed(root_seed, &format!("solver.{}", kind.name()));
    match kind {
        SolverKind::Exact => solve_exact(model),
        SolverKind::Sa => solve_sa(model, &settings.sa_params(seed)),
        SolverKind::Greedy => solve_greedy(
            model,
            settings.num_reads.unwrap_or(crate::solvers::DEFAULT_NUM_READS),
            seed,
        ),
        SolverKind::Qaoa => solve_qaoa_sim(model, &settings.qaoa_params(seed)),
        SolverKind::Auto => unreachable!("resolved above"),
    }
}

pub fn check_cap(kind: SolverKind, n: usize) -> Result<()> {
    let cap = match kind.resolve(n) {
        SolverKind::Exact => EXACT_MAX_VARS,
        SolverKind::Qaoa => QAOA_MAX_VARS,
        _ => return Ok(()),
    };
    if n > cap {
        return Err(Error::SolverCap {
            solver: kind.resolve(n).name(),
            n,
            cap,
        });
    }
    Ok(())
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub n_vars: usize,
    pub solver: SolverKind,
    pub best_cost: f64,
    pub gates: GateEstimate,
    pub metrics: MetricsReport,
}

fn create<P: AsRef<Path>>(path: P) -> Result<BufWriter<File>> {
    let path = path.as_ref();
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).in_file(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::from(e).in_file(path))
}

fn io_in(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::from(e).in_file(path)
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let t0 = Instant::now();
    let inputs = Inputs::load(&cfg.density_path, &cfg.pdb_path)?;
    let load_time = t0.elapsed().as_secs_f64();
    run_with_inputs(cfg, &inputs, load_time)
}

/// [`run_pipeline`] over already-parsed inputs.
pub fn run_with_inputs(cfg: &RunConfig, inputs: &Inputs, load_time: f64) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let mut timings = serde_json::Map::new();
    timings.insert("load".into(), json!(load_time));
    let mut lap = Instant::now();
    let mut tick = |name: &str, timings: &mut serde_json::Map<String, serde_json::Value>| {
        timings.insert(name.into(), json!(lap.elapsed().as_secs_f64()));
        lap = Instant::now();
    };

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_in(out))?;

    let pocket = match cfg.pocket {
        PocketSpec::Center(c) => PocketBox::new(c, cfg.side)?,
        PocketSpec::Derived(_) => pocket_from_waters(&inputs.waters, cfg.side)
            .map_err(|e| e.in_file(&cfg.pdb_path))?,
    };
    let cw = filter_to_box(&inputs.waters, &pocket);

    let sites = build_site_grid(&inputs.density, &pocket, cfg.delta, cfg.tau_g, cfg.sigma2)
        .map_err(|e| e.in_file(&cfg.density_path))?;
    let p = out.join("sites.csv");
    sites.write_csv(create(&p)?).map_err(io_in(&p))?;
    check_cap(cfg.solver, sites.len())?;
    tick("site_grid", &mut timings);

    let model = build_qubo(
        &sites,
        &inputs.density,
        &pocket,
        &QuboOptions {
            truncation_eps: cfg.truncation_eps,
            amplitude: cfg.amplitude,
        },
    )?;
    save_qubo(
        &model,
        &QuboSidecar::for_model(&model, Some(&sites), Some(cfg.amplitude)),
        &out.join("qubo.coo"),
    )?;
    let gates = estimate_gates(&model, DEFAULT_GATES_PER_EDGE, DEFAULT_ROUTING_FACTOR)?;
    tick("qubo", &mut timings);

    let result = solve_with(&model, cfg.solver, cfg.seed, &cfg.solver_settings())?;
    write_json(&out.join("solve_result.json"), &result.to_json())?;
    tick("solve", &mut timings);

    let placement = decode(&result.best_bitstring, &sites)?;
    let p = out.join("predicted_waters.pdb");
    write_waters_pdb(&placement, create(&p)?).map_err(io_in(&p))?;
    let metrics = score(&cw, &placement, cfg.cluster_radius)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    let pca = match pca_project(&cw, &placement) {
        Ok(pca) => {
            let p = out.join("pca.csv");
            pca.write_csv(create(&p)?).map_err(io_in(&p))?;
            json!({ "explained_variance_ratio": pca.explained_variance_ratio })
        }
        Err(e) => json!({ "skipped": e.to_string() }),
    };
    tick("evaluate", &mut timings);

    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "solver_used": cfg.solver.resolve(model.n()),
        "pocket": { "center": pocket.center, "side": pocket.side },
        "n_crystal_waters_in_pocket": cw.len(),
        "n_vars": model.n(),
        "coupling_edges": model.couplings().len(),
        "gates": gates,
        "pca": pca,
        "timings": timings,
        "wall_time": start.elapsed().as_secs_f64() + load_time,
    });
    write_json(&out.join("manifest.json"), &manifest)?;

    Ok(RunSummary {
        output_dir: out.clone(),
        n_vars: model.n(),
        solver: cfg.solver.resolve(model.n()),
        best_cost: result.best_cost,
        gates,
        metrics,
    })
}

/// Lists to take the cartesian product over; an empty list keeps the base
/// config value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub tau_g: Vec<f64>,
    #[serde(default)]
    pub sigma2: Vec<f64>,
    #[serde(default)]
    pub solver: Vec<SolverKind>,
    /// Concurrent rows; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Fit a quadratic to gate counts over the successful rows.
    #[serde(default)]
    pub fit: bool,
    #[serde(default)]
    pub target_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub delta: f64,
    pub tau_g: f64,
    pub sigma2: f64,
    pub solver: SolverKind,
    pub output_dir: PathBuf,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub scaling: Option<ScalingReport>,
}

impl SweepReport {
    pub const CSV_PREFIX: &'static str =
        "row,delta,tau_g,sigma2,solver,status,n_vars,coupling_edges,two_qubit_gates";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},{},error", Self::CSV_PREFIX, MetricsReport::CSV_HEADER)?;
        let blank_metrics = ",".repeat(MetricsReport::CSV_HEADER.matches(',').count());
        for r in &self.rows {
            let head = format!("{},{},{},{},{}", r.index, r.delta, r.tau_g, r.sigma2, r.solver.name());
            match &r.summary {
                Some(s) => writeln!(
                    w,
                    "{head},ok,{},{},{},{},",
                    s.n_vars,
                    s.gates.coupling_edges,
                    s.gates.total_two_qubit,
                    s.metrics.csv_row()
                )?,
                None => writeln!(
                    w,
                    "{head},failed,,,,{blank_metrics},\"{}\"",
                    r.error.as_deref().unwrap_or("").replace('"', "'").replace('\n', " ")
                )?,
            }
        }
        w.flush()
    }
}

/// One pipeline run per combination of the sweep lists, written under
/// `base.output_dir/row_NNN`. Failures are recorded per row.
pub fn run_sweep(base: &RunConfig, spec: &SweepSpec) -> Result<SweepReport> {
    let or_base = |v: &Vec<f64>, b: f64| if v.is_empty() { vec![b] } else { v.clone() };
    let deltas = or_base(&spec.delta, base.delta);
    let taus = or_base(&spec.tau_g, base.tau_g);
    let sigmas = or_base(&spec.sigma2, base.sigma2);
    let solvers = if spec.solver.is_empty() {
        vec![base.solver]
    } else {
        spec.solver.clone()
    };

    let mut configs = Vec::new();
    for &d in &deltas {
        for &t in &taus {
            for &s in &sigmas {
                for &k in &solvers {
                    let idx = configs.len();
                    let mut c = base.clone();
                    c.delta = d;
                    c.tau_g = t;
                    c.sigma2 = s;
                    c.solver = k;
                    c.output_dir = base.output_dir.join(format!("row_{idx:03}"));
                    configs.push(c);
                }
            }
        }
    }

    fs::create_dir_all(&base.output_dir).map_err(io_in(&base.output_dir))?;
    let t0 = Instant::now();
    let inputs = Inputs::load(&base.density_path, &base.pdb_path)?;
    let load_time = t0.elapsed().as_secs_f64();

    let run_all = || -> Vec<SweepRow> {
        configs
            .par_iter()
            .enumerate()
            .map(|(index, c)| {
                let outcome = run_with_inputs(c, &inputs, load_time);
                let (summary, error, exit_code) = match outcome {
                    Ok(s) => (Some(s), None, 0),
                    Err(e) => (None, Some(e.to_string()), e.exit_code()),
                };
                SweepRow {
                    index,
                    delta: c.delta,
                    tau_g: c.tau_g,
                    sigma2: c.sigma2,
                    solver: c.solver,
                    output_dir: c.output_dir.clone(),
                    summary,
                    error,
                    exit_code,
                }
            })
            .collect()
    };
    let rows = match spec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let scaling = spec.fit.then(|| {
        let estimates = rows
            .iter()
            .filter_map(|r| r.summary.as_ref().map(|s| s.gates))
            .collect();
        ScalingReport::from_estimates(estimates, spec.target_n.unwrap_or(DEFAULT_TARGET_N))
    });
    let report = SweepReport { rows, scaling };

    let p = base.output_dir.join("sweep.csv");
    report.write_csv(create(&p)?).map_err(io_in(&p))?;
    if let Some(s) = &report.scaling {
        write_json(&base.output_dir.join("scaling_fit.json"), s)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        json!({
            "density_path": "d.dx",
            "pdb_path": "w.pdb",
            "delta": 0.5,
            "tau_g": 0.1,
            "sigma2": 0.8,
            "output_dir": "out"
        })
    }

    #[test]
    fn config_defaults_and_strictness() {
        let c = RunConfig::from_json_str(&base_json().to_string()).unwrap();
        assert_eq!(c.side, 15.0);
        assert_eq!(c.pocket, PocketSpec::default());
        assert_eq!(c.solver, SolverKind::Auto);
        assert_eq!(c.amplitude, 1.0);
        c.validate().unwrap();

        let mut v = base_json();
        v["detla"] = json!(0.5);
        assert!(matches!(RunConfig::from_json_str(&v.to_string()), Err(Error::Config(_))));

        let mut v = base_json();
        v["pocket"] = json!([1.0, 2.0, 3.0]);
        v["solver"] = json!("qaoa");
        let c = RunConfig::from_json_str(&v.to_string()).unwrap();
        assert_eq!(c.pocket, PocketSpec::Center([1.0, 2.0, 3.0]));
        assert_eq!(c.solver, SolverKind::Qaoa);

        let mut v = base_json();
        v["pocket"] = json!("centroid");
        assert!(RunConfig::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn config_validation() {
        for (k, bad) in [("delta", json!(0.0)), ("sigma2", json!(-1.0)), ("tau_g", json!(-0.1)), ("side", json!(0.0))] {
            let mut v = base_json();
            v[k] = bad;
            let c = RunConfig::from_json_str(&v.to_string()).unwrap();
            let err = c.validate().unwrap_err();
            assert!(err.to_string().contains(k), "{err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn caps_and_auto() {
        assert!(check_cap(SolverKind::Exact, 28).is_ok());
        assert!(matches!(check_cap(SolverKind::Exact, 29), Err(Error::SolverCap { .. })));
        assert!(matches!(check_cap(SolverKind::Qaoa, 23), Err(Error::SolverCap { .. })));
        assert!(check_cap(SolverKind::Auto, 500).is_ok());
        assert_eq!(SolverKind::Auto.resolve(28), SolverKind::Exact);
        assert_eq!(SolverKind::Auto.resolve(29), SolverKind::Sa);
        assert_eq!("greedy".parse::<SolverKind>().unwrap(), SolverKind::Greedy);
        assert!("cplex".parse::<SolverKind>().is_err());
    }
}
