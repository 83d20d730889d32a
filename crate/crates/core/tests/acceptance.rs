//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured values, then asserts.
//!
//! Run with `cargo test -p hydroqubo --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs::File;
use std::time::Instant;

use rand::Rng;
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use hydroqubo::density::{parse_dx, synthesize_planted, write_dx, DensityGrid, GridSpec};
use hydroqubo::evaluation::{build_clusters, compute_metrics};
use hydroqubo::geom::{dist, Vec3};
use hydroqubo::pipeline::{run_pipeline, run_sweep, RunConfig, SweepSpec};
use hydroqubo::placement::{write_waters_pdb, WaterPlacement};
use hydroqubo::qubo::{build_qubo, spins_from_bits, QuboOptions};
use hydroqubo::seed::rng_from;
use hydroqubo::sitegrid::{build_site_grid, SiteGrid};
use hydroqubo::solvers::{
    solve_exact, solve_greedy, solve_qaoa_sim, solve_sa, Bitstring, QaoaParams, QaoaSimulator,
    SaParams, SolveResult,
};
use hydroqubo::structure::{parse_waters, CrystalWaters, PocketBox};
use hydroqubo::QuboModel;

/// Written to the process stdout directly so the line survives output capture.
fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {n}: {} {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = out.flush();
}

/// Mixture amplitude for which unit-peak Gaussians of variance `sigma2` are
/// reproduced exactly by the normalized mixture.
fn matched_amplitude(sigma2: f64) -> f64 {
    (2.0 * PI * sigma2).powf(1.5)
}

fn write_inputs(dir: &std::path::Path, density: &DensityGrid, waters: &[Vec3]) -> (std::path::PathBuf, std::path::PathBuf) {
    let dx = dir.join("density.dx");
    write_dx(density, File::create(&dx).unwrap()).unwrap();
    let pdb = dir.join("waters.pdb");
    write_waters_pdb(
        &WaterPlacement::from_positions(waters.to_vec()),
        File::create(&pdb).unwrap(),
    )
    .unwrap();
    (dx, pdb)
}

/// `k` lattice points of spacing `delta`, at least 3 Å from the faces of the
/// 15 Å box at the origin and pairwise at least 4 Å apart.
fn planted_sites(k: usize, delta: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = rng_from(seed);
    let steps = ((15.0 - 6.0) / delta).round() as i64;
    let mut sites: Vec<Vec3> = Vec::new();
    while sites.len() < k {
        let p = [0, 1, 2].map(|_| 3.0 + delta * rng.random_range(0..=steps) as f64);
        if sites.iter().all(|q| dist(q, &p) >= 4.0) {
            sites.push(p);
        }
    }
    sites
}

#[test]
fn criterion_1_planted_recovery() {
    let (sigma2, delta) = (0.8, 0.5);
    let mut all_pass = true;
    for k in 3..=8usize {
        let sites = planted_sites(k, delta, k as u64);
        let spec = GridSpec::new([-6.0; 3], [0.5; 3], [55; 3]).unwrap();
        let density = synthesize_planted(&sites, 1.0, sigma2, spec, 0.0, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (dx, pdb) = write_inputs(dir.path(), &density, &sites);
        let cfg = RunConfig::from_json_str(
            &json!({
                "density_path": dx,
                "pdb_path": pdb,
                "pocket": [7.5, 7.5, 7.5],
                "delta": delta,
                "tau_g": 0.1,
                "sigma2": sigma2,
                "amplitude": matched_amplitude(sigma2),
                "solver": "auto",
                "num_reads": 128,
                "sweeps": 3000,
                "beta_hot": 1.0,
                "beta_cold": 4.0,
                "seed": 2024,
                "output_dir": dir.path().join("out"),
            })
            .to_string(),
        )
        .unwrap();
        let t = Instant::now();
        let s = run_pipeline(&cfg).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let m = &s.metrics;
        let cs = m.cs_mean.map(|e| e.mean).unwrap_or(f64::NAN);
        let pass = m.c == 1.0 && m.p_star >= 0.8 && cs <= 1.5 && secs < 60.0;
        all_pass &= pass;
        report(
            1,
            pass,
            format!(
                "k={k} N={} solver={} C={} P*={:.4} <CS>={cs:.3} m={} time={secs:.1}s",
                s.n_vars,
                s.solver.name(),
                m.c,
                m.p_star,
                m.m
            ),
        );
    }
    assert!(all_pass);
}

/// Brute force straight from a dense upper-triangular matrix.
fn naive_best(n: usize, q: &[Vec<f64>]) -> (u64, f64) {
    let cost = |mask: u64| {
        let mut c = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 0 {
                continue;
            }
            c += q[i][i];
            for j in i + 1..n {
                if mask >> j & 1 == 1 {
                    c += 2.0 * q[i][j];
                }
            }
        }
        c
    };
    let costs: Vec<f64> = (0..1u64 << n).map(cost).collect();
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + min.abs());
    let mask = (0..1u64 << n).find(|&b| costs[b as usize] <= min + tol).unwrap();
    (mask, costs[mask as usize])
}

fn random_dense(n: usize, integer: bool, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = if integer {
                rng.random_range(-2..=2) as f64
            } else if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            };
            q[i][j] = v;
        }
    }
    q
}

fn model_from_dense(q: &[Vec<f64>]) -> QuboModel {
    let n = q.len();
    let diag = (0..n).map(|i| q[i][i]).collect();
    let mut couplings = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if q[i][j] != 0.0 {
                couplings.push((i, j, q[i][j]));
            }
        }
    }
    QuboModel::new(diag, couplings).unwrap()
}

#[test]
fn criterion_2_exact_certification() {
    let n = 12;
    let mut rng = rng_from(12);
    let t = Instant::now();
    let mut matched = 0;
    let mut ties = 0;
    for case in 0..200 {
        // Every other model has small integer weights, where ties are common.
        let q = random_dense(n, case % 2 == 0, &mut rng);
        let model = model_from_dense(&q);
        let (mask, cost) = naive_best(n, &q);
        let r = solve_exact(&model).unwrap();
        let same_bits = r.best_bitstring.to_mask() == mask;
        let same_cost = (r.best_cost - cost).abs() <= 1e-12 * (1.0 + cost.abs());
        if case % 2 == 0 {
            let tied = (0..1u64 << n).filter(|&b| (model.cost(Bitstring::from_mask(b, n).bits()).unwrap() - cost).abs() < 1e-9).count();
            ties += (tied > 1) as usize;
        }
        matched += (same_bits && same_cost) as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = matched == 200 && secs < 30.0;
    report(2, pass, format!("matched {matched}/200 ({ties} models with tied optima) in {secs:.2}s"));
    assert!(pass);
}

#[test]
fn criterion_3_ising_equivalence() {
    let n = 10;
    let mut rng = rng_from(3);
    let mut worst: f64 = 0.0;
    let mut passed = 0;
    for _ in 0..100 {
        let model = model_from_dense(&random_dense(n, false, &mut rng));
        let ising = model.to_ising();
        let mut ok = true;
        for b in 0..1u64 << n {
            let x = Bitstring::from_mask(b, n);
            let c = model.cost(x.bits()).unwrap();
            let e = ising.energy(&spins_from_bits(x.bits())).unwrap();
            worst = worst.max((c - e).abs());
            ok &= (c - e).abs() <= 1e-9;
        }
        passed += ok as usize;
    }
    let pass = passed == 100;
    report(3, pass, format!("{passed}/100 models, max |cost - energy| = {worst:.2e}"));
    assert!(pass);
}

/// Planted sites each flanked by four decoys `off` Å away in the xy-plane,
/// with the mixture amplitude matched so the planted set is the exact fit.
fn decoy_instance(centers: &[Vec3], off: f64) -> QuboModel {
    let sigma2 = 0.8;
    let mut sites = Vec::new();
    for c in centers {
        sites.push(*c);
        for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
            let mut p = *c;
            p[axis] += sign * off;
            sites.push(p);
        }
    }
    let spec = GridSpec::new([-5.0; 3], [0.25; 3], [81; 3]).unwrap();
    let density = synthesize_planted(centers, 1.0, sigma2, spec, 0.0, 0).unwrap();
    let grid = SiteGrid {
        sites,
        sigma2,
        delta: off,
        tau_g: 0.0,
        source_spacing: [0.25; 3],
    };
    let pocket = PocketBox::new([5.0; 3], 20.0).unwrap();
    build_qubo(
        &grid,
        &density,
        &pocket,
        &QuboOptions {
            truncation_eps: 1e-8,
            amplitude: matched_amplitude(sigma2),
        },
    )
    .unwrap()
}

fn planted_mask(n_centers: usize) -> Bitstring {
    let mut b = vec![0u8; 5 * n_centers];
    for c in 0..n_centers {
        b[5 * c] = 1;
    }
    Bitstring(b)
}

/// Empirical CDF of per-sample costs evaluated at `t`.
fn cdf(r: &SolveResult, t: f64) -> f64 {
    let below: u64 = r
        .samples
        .iter()
        .filter(|(b, _)| r.costs[*b] <= t + 1e-9 * (1.0 + t.abs()))
        .map(|(_, c)| c)
        .sum();
    below as f64 / r.total_samples as f64
}

#[test]
fn criterion_4_sa_versus_greedy() {
    let centers = [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [4.0, 4.0, 0.0]];
    let model = decoy_instance(&centers, 1.0);
    assert_eq!(model.n(), 20);
    let exact = solve_exact(&model).unwrap();
    assert_eq!(exact.best_bitstring, planted_mask(4));

    let sa = solve_sa(
        &model,
        &SaParams {
            seed: 4,
            ..SaParams::default()
        },
    )
    .unwrap();
    let greedy = solve_greedy(&model, 10_000, 4).unwrap();
    let p_sa = sa.probability_of_cost(exact.best_cost);
    let p_greedy = greedy.probability_of_cost(exact.best_cost);

    let levels: BTreeSet<u64> = sa
        .costs
        .values()
        .chain(greedy.costs.values())
        .map(|c| c.to_bits())
        .collect();
    let violations = levels
        .iter()
        .map(|&b| f64::from_bits(b))
        .filter(|&t| cdf(&sa, t) < cdf(&greedy, t))
        .count();
    let pass = p_sa >= 0.01 && violations == 0;
    report(
        4,
        pass,
        format!(
            "N=20 reads=10000 P_SA(opt)={p_sa:.4} P_greedy(opt)={p_greedy:.4} dominance violations={violations}/{}",
            levels.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_qaoa() {
    let t = Instant::now();

    // (a) norm after every layer.
    let mut rng = rng_from(5);
    let model = model_from_dense(&random_dense(10, false, &mut rng));
    let sim = QaoaSimulator::new(&model.to_ising()).unwrap();
    let angles: Vec<f64> = (0..6).map(|_| rng.random_range(-PI..PI)).collect();
    let mut worst: f64 = 0.0;
    sim.state_with(&angles, |_, psi| {
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        worst = worst.max((norm - 1.0).abs());
    });
    let pass_a = worst <= 1e-10;
    report(5, pass_a, format!("(a) max |norm - 1| over 3 layers = {worst:.2e}"));

    // (b) zero angles sample uniformly.
    let psi = sim.state(&[0.0, 0.0]);
    let shots = 100_000;
    let draws = sim.sample(&psi, shots, &mut rng_from(55));
    let mut counts = vec![0u64; 1024];
    for d in draws {
        counts[d as usize] += 1;
    }
    let expected = shots as f64 / 1024.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new(1023.0).unwrap().cdf(chi2);
    let pass_b = p_value > 0.01;
    report(5, pass_b, format!("(b) chi2={chi2:.1} dof=1023 p={p_value:.3}"));

    // (c) p=2 plus refinement on a planted instance built by the pipeline:
    // one unit Gaussian, delta = 1.5, tau_g = 0.1, which gives 10 sites.
    let sigma2 = 0.8;
    let spec = GridSpec::new([-6.0; 3], [0.25; 3], [97; 3]).unwrap();
    let density = synthesize_planted(&[[6.0; 3]], 1.0, sigma2, spec, 0.0, 0).unwrap();
    let pocket = PocketBox::new([6.0; 3], 12.0).unwrap();
    let grid = build_site_grid(&density, &pocket, 1.5, 0.1, sigma2).unwrap();
    let model = build_qubo(
        &grid,
        &density,
        &pocket,
        &QuboOptions {
            truncation_eps: 1e-8,
            amplitude: matched_amplitude(sigma2),
        },
    )
    .unwrap();
    let exact = solve_exact(&model).unwrap();
    let q = solve_qaoa_sim(
        &model,
        &QaoaParams {
            seed: 5,
            ..QaoaParams::default()
        },
    )
    .unwrap();
    let p_opt = q.probability_of(&exact.best_bitstring);
    let expectation = q.parameters["expectation"].as_f64().unwrap();
    let sim = QaoaSimulator::new(&model.to_ising()).unwrap();
    let uniform_mean = sim.energies().iter().sum::<f64>() / sim.energies().len() as f64;
    let pass_c = grid.len() == 10 && p_opt >= 0.5 && expectation < uniform_mean;
    let secs = t.elapsed().as_secs_f64();
    report(
        5,
        pass_c && secs < 300.0,
        format!(
            "(c) N={} P(opt after refine)={p_opt:.4} <E>={expectation:.4} uniform <E>={uniform_mean:.4} time={secs:.1}s",
            grid.len()
        ),
    );

    // Diagnostic only: decoys one 1 Å step from each planted site.
    let hard = decoy_instance(&[[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]], 1.0);
    let hq = solve_qaoa_sim(&hard, &QaoaParams { seed: 5, ..QaoaParams::default() }).unwrap();
    let hg = solve_greedy(&hard, 10_000, 5).unwrap();
    println!(
        "criterion 5: note (c) on a decoy instance: P_QAOA+refine(opt)={:.4} P_greedy(opt)={:.4}",
        hq.probability_of(&planted_mask(2)),
        hg.probability_of(&planted_mask(2))
    );

    assert!(pass_a && pass_b && pass_c && secs < 300.0);
}

#[test]
fn criterion_6_metric_fixtures() {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let run = |cw: Vec<Vec3>, pw: Vec<Vec3>| {
        let cw = CrystalWaters::new(cw).unwrap();
        let pw = WaterPlacement::from_positions(pw);
        let clusters = build_clusters(&cw, &pw, 3.0).unwrap();
        compute_metrics(clusters, cw.len(), pw.m(), 3.0)
    };
    let mut ok = Vec::new();

    let r = run(vec![[0.0; 3]], vec![[1.0, 0.0, 0.0]]);
    let p = r.p_mean.unwrap();
    let cs = r.cs_mean.unwrap();
    ok.push(close(r.c, 1.0) && close(r.p_star, 0.5) && close(p.mean, 0.5) && close(cs.mean, 1.0) && p.ci95 == 0.0 && cs.ci95 == 0.0);

    let r = run(vec![[0.0; 3]], vec![[0.0; 3], [1.0, 0.0, 0.0]]);
    ok.push(
        close(r.p_star, 1.0) && close(r.p_mean.unwrap().mean, 0.75) && close(r.cs_mean.unwrap().mean, 2.0),
    );

    let r = run(vec![[0.0; 3], [10.0, 0.0, 0.0]], vec![[0.0; 3]]);
    ok.push(close(r.c, 0.5) && close(r.p_star, 0.5) && close(r.p_mean.unwrap().mean, 1.0));

    let pass = ok.iter().all(|&b| b);
    report(6, pass, format!("fixtures {:?}", ok));
    assert!(pass);
}

#[test]
fn criterion_7_resource_extrapolation() {
    let sigma2 = 1.0;
    // Eight unit Gaussians on the corners of a 9 Å cube centred in the box.
    let sites: Vec<Vec3> = (0..8)
        .map(|c| [0, 1, 2].map(|a| if c >> a & 1 == 1 { 12.0 } else { 3.0 }))
        .collect();
    let spec = GridSpec::new([-6.0; 3], [0.5; 3], [55; 3]).unwrap();
    let density = synthesize_planted(&sites, 1.0, sigma2, spec, 0.0, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (dx, pdb) = write_inputs(dir.path(), &density, &sites);
    let base = RunConfig::from_json_str(
        &json!({
            "density_path": dx,
            "pdb_path": pdb,
            "pocket": [7.5, 7.5, 7.5],
            "delta": 1.0,
            "tau_g": 0.1,
            "sigma2": sigma2,
            "solver": "greedy",
            "num_reads": 1,
            "output_dir": dir.path().join("sweep"),
        })
        .to_string(),
    )
    .unwrap();
    let sweep = SweepSpec {
        delta: vec![2.0, 1.5, 1.0, 0.75, 0.5],
        fit: true,
        ..SweepSpec::default()
    };
    let report_ = run_sweep(&base, &sweep).unwrap();
    let scaling = report_.scaling.as_ref().unwrap();
    let fit = scaling.fit.as_ref().unwrap();
    let ratio = fit.residual_rms / fit.mean_count();
    let projection = scaling.projection.unwrap();
    let points: Vec<String> = fit.points.iter().map(|(n, g)| format!("({n}, {g})")).collect();
    let pass = report_.rows.iter().all(|r| r.summary.is_some())
        && ratio < 0.2
        && (1e4..=1e6).contains(&projection);
    report(
        7,
        pass,
        format!(
            "points {} a={:.4} b={:.2} c={:.1} rms/mean={ratio:.2e} projected gates at N=900: {projection:.3e}",
            points.join(" "),
            fit.a,
            fit.b,
            fit.c
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_format_round_trips() {
    let mut rng = rng_from(8);
    let mut dx_worst: f64 = 0.0;
    for _ in 0..20 {
        let counts = [0, 1, 2].map(|_| rng.random_range(2..8usize));
        let spacing = [0, 1, 2].map(|_| rng.random_range(0.1..2.0));
        let origin = [0, 1, 2].map(|_| rng.random_range(-50.0..50.0));
        let spec = GridSpec::new(origin, spacing, counts).unwrap();
        let values: Vec<f64> = (0..spec.len())
            .map(|_| rng.random::<f64>() * 10f64.powi(rng.random_range(-6..4)))
            .collect();
        let grid = DensityGrid::new(spec, values).unwrap();
        let mut buf = Vec::new();
        write_dx(&grid, &mut buf).unwrap();
        let back = parse_dx(buf.as_slice()).unwrap();
        assert_eq!(back.counts(), grid.counts());
        for (a, b) in grid.values().iter().zip(back.values()) {
            dx_worst = dx_worst.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
        }
        for k in 0..3 {
            dx_worst = dx_worst.max((grid.origin()[k] - back.origin()[k]).abs() / grid.origin()[k].abs().max(1.0));
            dx_worst = dx_worst.max((grid.spacing()[k] - back.spacing()[k]).abs() / grid.spacing()[k]);
        }
    }

    let mut pdb_worst: f64 = 0.0;
    for _ in 0..20 {
        let mut pts: Vec<Vec3> = Vec::new();
        while pts.len() < 50 {
            let p = [0, 1, 2].map(|_| rng.random_range(-999.0..9999.0));
            if pts.iter().all(|q| dist(q, &p) > 0.5) {
                pts.push(p);
            }
        }
        let mut buf = Vec::new();
        write_waters_pdb(&WaterPlacement::from_positions(pts.clone()), &mut buf).unwrap();
        let back = parse_waters(buf.as_slice()).unwrap();
        assert_eq!(back.len(), pts.len());
        for (a, b) in pts.iter().zip(back.positions()) {
            for k in 0..3 {
                pdb_worst = pdb_worst.max((a[k] - b[k]).abs());
            }
        }
    }
    let pass = dx_worst <= 1e-6 && pdb_worst <= 1e-3;
    report(
        8,
        pass,
        format!("DX max relative error {dx_worst:.2e}; PDB max coordinate error {pdb_worst:.2e} Å"),
    );
    assert!(pass);
}
