use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use hydroqubo::density::{synthesize_planted, write_dx, GridSpec};
use hydroqubo::evaluation::{score, DEFAULT_CLUSTER_RADIUS};
use hydroqubo::geom::dist;
use hydroqubo::pipeline::{
    check_cap, read_waters, run_pipeline, run_sweep, solve_with, RunConfig, SolverKind,
    SolverSettings, SweepSpec,
};
use hydroqubo::placement::{write_waters_pdb, WaterPlacement};
use hydroqubo::qubo::load_qubo;
use hydroqubo::resources::{
    estimate_gates, ScalingReport, DEFAULT_GATES_PER_EDGE, DEFAULT_ROUTING_FACTOR,
    DEFAULT_TARGET_N,
};
use hydroqubo::seed::{derive_seed, rng_from};
use hydroqubo::{Error, Result};

#[derive(Parser)]
#[command(name = "hydroqubo", version, about = "Hydration-site placement as a QUBO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: density + structure -> sites, QUBO, solution, metrics.
    Run(RunArgs),
    /// Cartesian-product sweep over delta / tau_g / sigma2 / solver.
    Sweep(SweepArgs),
    /// Solve a saved QUBO (COO file with its .json sidecar).
    Solve(SolveArgs),
    /// Score predicted waters against crystal waters.
    Score(ScoreArgs),
    /// Two-qubit gate estimates for saved QUBOs, with a quadratic fit.
    Estimate(EstimateArgs),
    /// Write a synthetic density of planted Gaussians and matching waters.
    Synth(SynthArgs),
}

/// Flags mirroring the run config keys; each overrides the config file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    density_path: Option<PathBuf>,
    #[arg(long)]
    pdb_path: Option<PathBuf>,
    /// `from-waters` or `x,y,z`.
    #[arg(long)]
    pocket: Option<String>,
    #[arg(long)]
    side: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tau_g: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    num_reads: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    beta_hot: Option<f64>,
    #[arg(long)]
    beta_cold: Option<f64>,
    #[arg(long)]
    qaoa_layers: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    truncation_eps: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    cluster_radius: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut doc = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::from(e).in_file(p))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| Error::Config(e.to_string()).in_file(p))?
            }
            None => Value::Object(Map::new()),
        };
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let mut set = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                obj.insert(key.to_string(), v);
            }
        };
        set("density_path", self.density_path.as_ref().map(|p| json!(p)));
        set("pdb_path", self.pdb_path.as_ref().map(|p| json!(p)));
        set("pocket", self.pocket.as_deref().map(parse_pocket).transpose()?);
        set("side", self.side.map(|v| json!(v)));
        set("delta", self.delta.map(|v| json!(v)));
        set("tau_g", self.tau_g.map(|v| json!(v)));
        set("sigma2", self.sigma2.map(|v| json!(v)));
        set("solver", self.solver.as_ref().map(|v| json!(v)));
        set("num_reads", self.num_reads.map(|v| json!(v)));
        set("sweeps", self.sweeps.map(|v| json!(v)));
        set("beta_hot", self.beta_hot.map(|v| json!(v)));
        set("beta_cold", self.beta_cold.map(|v| json!(v)));
        set("qaoa_layers", self.qaoa_layers.map(|v| json!(v)));
        set("shots", self.shots.map(|v| json!(v)));
        set("max_iters", self.max_iters.map(|v| json!(v)));
        set("seed", self.seed.map(|v| json!(v)));
        set("output_dir", self.output_dir.as_ref().map(|p| json!(p)));
        set("truncation_eps", self.truncation_eps.map(|v| json!(v)));
        set("amplitude", self.amplitude.map(|v| json!(v)));
        set("cluster_radius", self.cluster_radius.map(|v| json!(v)));
        let cfg = RunConfig::from_json_str(&doc.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_pocket(s: &str) -> Result<Value> {
    if s == "from-waters" {
        return Ok(json!(s));
    }
    let xyz = parse_list::<f64>(s, "pocket")?;
    if xyz.len() != 3 {
        return Err(Error::Config(format!(
            "pocket must be 'from-waters' or x,y,z, got {s:?}"
        )));
    }
    Ok(json!(xyz))
}

fn parse_list<T: std::str::FromStr>(s: &str, name: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{name}: cannot parse {t:?}")))
        })
        .collect()
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// JSON sweep spec (lists delta, tau_g, sigma2, solver; workers; fit; target_n).
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Comma-separated delta values.
    #[arg(long)]
    deltas: Option<String>,
    #[arg(long)]
    tau_gs: Option<String>,
    #[arg(long)]
    sigma2s: Option<String>,
    #[arg(long)]
    solvers: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Fit a quadratic to the gate counts.
    #[arg(long)]
    fit: bool,
    #[arg(long)]
    target_n: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// COO file; its `.json` sidecar must sit next to it.
    #[arg(long)]
    qubo: PathBuf,
    #[arg(long, default_value = "auto")]
    solver: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    num_reads: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    beta_hot: Option<f64>,
    #[arg(long)]
    beta_cold: Option<f64>,
    #[arg(long)]
    qaoa_layers: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Crystal-water PDB.
    #[arg(long)]
    crystal: PathBuf,
    /// Predicted-water PDB.
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CLUSTER_RADIUS)]
    cluster_radius: f64,
    /// Emit the flat CSV row instead of JSON.
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// One or more COO files (each with its sidecar).
    #[arg(long, num_args = 1.., required = true)]
    qubo: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GATES_PER_EDGE)]
    gates_per_edge: u32,
    #[arg(long, default_value_t = DEFAULT_ROUTING_FACTOR)]
    routing_factor: f64,
    #[arg(long, default_value_t = DEFAULT_TARGET_N)]
    target_n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of planted Gaussians.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.8)]
    sigma2: f64,
    /// Planted sites sit on this lattice spacing.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Minimum pairwise separation of planted sites.
    #[arg(long, default_value_t = 4.0)]
    min_separation: f64,
    /// Uniform noise amplitude added to the density.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::from(e).in_file(p)),
        None => io::stdout().write_all(text.as_bytes()).map_err(Error::from),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let s = run_pipeline(&cfg)?;
    emit(
        &json!({
            "output_dir": s.output_dir,
            "n_vars": s.n_vars,
            "solver": s.solver,
            "best_cost": s.best_cost,
            "two_qubit_gates": s.gates.total_two_qubit,
            "C": s.metrics.c,
            "P_star": s.metrics.p_star,
            "n": s.metrics.n,
            "m": s.metrics.m,
        }),
        None,
    )
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = args.config.resolve()?;
    let mut spec = match &args.sweep {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::from(e).in_file(p))?;
            serde_json::from_str::<SweepSpec>(&text)
                .map_err(|e| Error::Config(e.to_string()).in_file(p))?
        }
        None => SweepSpec::default(),
    };
    if let Some(s) = &args.deltas {
        spec.delta = parse_list(s, "deltas")?;
    }
    if let Some(s) = &args.tau_gs {
        spec.tau_g = parse_list(s, "tau_gs")?;
    }
    if let Some(s) = &args.sigma2s {
        spec.sigma2 = parse_list(s, "sigma2s")?;
    }
    if let Some(s) = &args.solvers {
        spec.solver = parse_list::<SolverKind>(s, "solvers")?;
    }
    spec.workers = args.workers.or(spec.workers);
    spec.fit |= args.fit;
    spec.target_n = args.target_n.or(spec.target_n);

    let report = run_sweep(&base, &spec)?;
    let mut out = BufWriter::new(io::stdout());
    report.write_csv(&mut out)?;
    let failed = report.rows.iter().filter(|r| r.summary.is_none()).count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep rows failed", report.rows.len());
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let (model, _) = load_qubo(&args.qubo)?;
    let kind: SolverKind = args.solver.parse()?;
    check_cap(kind, model.n())?;
    let settings = SolverSettings {
        num_reads: args.num_reads,
        sweeps: args.sweeps,
        beta_hot: args.beta_hot,
        beta_cold: args.beta_cold,
        qaoa_layers: args.qaoa_layers,
        shots: args.shots,
        max_iters: args.max_iters,
    };
    let r = solve_with(&model, kind, args.seed, &settings)?;
    emit(&serde_json::to_value(r.to_json())?, args.out.as_deref())
}

fn score_cmd(args: ScoreArgs) -> Result<()> {
    let cw = read_waters(&args.crystal)?;
    let pw = WaterPlacement::from_positions(read_waters(&args.predicted)?.positions().to_vec());
    let report = score(&cw, &pw, args.cluster_radius)?;
    if args.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        return match &args.out {
            Some(p) => fs::write(p, buf).map_err(|e| Error::from(e).in_file(p)),
            None => io::stdout().write_all(&buf).map_err(Error::from),
        };
    }
    emit(&serde_json::to_value(&report)?, args.out.as_deref())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let estimates = args
        .qubo
        .iter()
        .map(|p| {
            let (model, _) = load_qubo(p)?;
            estimate_gates(&model, args.gates_per_edge, args.routing_factor)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ScalingReport::from_estimates(estimates, args.target_n);
    report.gates_per_edge = args.gates_per_edge;
    report.routing_factor = args.routing_factor;
    emit(&serde_json::to_value(&report)?, args.out.as_deref())
}

fn synth(args: SynthArgs) -> Result<()> {
    use rand::Rng;
    if args.k == 0 || !(args.delta > 0.0) || !(args.sigma2 > 0.0) {
        return Err(Error::Config("k, delta and sigma2 must be positive".into()));
    }
    // Planted sites on the delta lattice inside [3, 12]^3 of a 15 Å box.
    let steps = (9.0 / args.delta).floor() as i64;
    let mut rng = rng_from(derive_seed(args.seed, "synth.sites"));
    let mut sites: Vec<[f64; 3]> = Vec::new();
    let mut attempts = 0;
    while sites.len() < args.k {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Config(format!(
                "cannot place {} sites {} Å apart in the box",
                args.k, args.min_separation
            )));
        }
        let p = [0, 1, 2].map(|_| 3.0 + args.delta * rng.random_range(0..=steps) as f64);
        if sites.iter().all(|q| dist(q, &p) >= args.min_separation) {
            sites.push(p);
        }
    }
    let spec = GridSpec::new([0.0; 3], [0.5; 3], [31; 3])?;
    let density = synthesize_planted(
        &sites,
        1.0,
        args.sigma2,
        spec,
        args.noise,
        derive_seed(args.seed, "synth.noise"),
    )?;
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let dx = dir.join("density.dx");
    let f = File::create(&dx).map_err(|e| Error::from(e).in_file(&dx))?;
    write_dx(&density, BufWriter::new(f)).map_err(|e| Error::from(e).in_file(&dx))?;
    let pdb = dir.join("waters.pdb");
    let f = File::create(&pdb).map_err(|e| Error::from(e).in_file(&pdb))?;
    write_waters_pdb(&WaterPlacement::from_positions(sites.clone()), BufWriter::new(f))
        .map_err(|e| Error::from(e).in_file(&pdb))?;
    emit(
        &json!({
            "density_path": dx,
            "pdb_path": pdb,
            "sites": sites,
            "pocket": [7.5, 7.5, 7.5],
            "matched_amplitude": (2.0 * std::f64::consts::PI * args.sigma2).powf(1.5),
        }),
        None,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Solve(a) => solve(a),
        Command::Score(a) => score_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Synth(a) => synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
