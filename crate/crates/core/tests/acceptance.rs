//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bhident::curves::{fit_monotone_spline, synth_ensemble};
use bhident::fem::*;
use bhident::inversion::{minimize, Evaluation, PsoConfig};
use bhident::kle::{solve_eigenproblem, MaterialModel};
use bhident::pipeline::{self, RunConfig};
use bhident::sensitivity::{rank_probes, solve_all_modes};
use bhident::MU0;
use common::{l2, nystrom, trapezoid};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Leading and fourth eigenvalue of a measured 26-specimen ensemble.
const REFERENCE_LAMBDA: [f64; 2] = [198838.282659316, 32.2439174442745];

struct Outcome {
    pass: bool,
    detail: String,
}

struct Checks {
    pass: bool,
    notes: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self {
            pass: true,
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, note: String) {
        self.pass &= ok;
        self.notes.push(if ok { note } else { format!("{note} [FAIL]") });
    }

    fn time(&mut self, elapsed: Duration, limit: Duration) {
        self.check(
            elapsed < limit,
            format!("runtime {:.1} s < {} s", elapsed.as_secs_f64(), limit.as_secs()),
        );
    }

    fn done(self) -> Outcome {
        Outcome {
            pass: self.pass,
            detail: self.notes.join("; "),
        }
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn spectrum_decay() -> Outcome {
    let mut c = Checks::new();
    let start = Instant::now();
    let build = common::synthetic_build();
    let elapsed = start.elapsed();
    let l = &build.spectrum;
    let ratio = l[3] / l[0];
    c.check(ratio < 1e-3, format!("lambda4/lambda1 = {ratio:.4e} < 1e-3"));
    let reference = REFERENCE_LAMBDA[1] / REFERENCE_LAMBDA[0];
    c.check(
        reference < 1e-3,
        format!("reference ensemble ratio {reference:.4e} < 1e-3"),
    );
    c.time(elapsed, Duration::from_secs(10));
    c.done()
}

fn kle_correctness() -> Outcome {
    let mut c = Checks::new();
    let build = common::synthetic_build();
    let stats = &build.stats;
    let n = stats.grid.len();
    let pairs = solve_eigenproblem(stats, 5).unwrap();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| stats.covariance[(i, j)]).collect())
        .collect();
    let oracle = nystrom(&cov, &stats.grid, 5);
    let w = trapezoid(&stats.grid);
    let dot = |a: &[f64], b: &[f64]| -> f64 { w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum() };
    let mut worst_value: f64 = 0.0;
    let mut worst_mode: f64 = 0.0;
    for (p, (lam, phi)) in pairs.iter().zip(&oracle) {
        worst_value = worst_value.max((p.value - lam).abs() / lam);
        let sign = dot(&p.mode, phi).signum();
        let diff: Vec<f64> = p.mode.iter().zip(phi).map(|(a, b)| a - sign * b).collect();
        worst_mode = worst_mode.max(l2(&w, &diff));
    }
    c.check(worst_value < 1e-6, format!("eigenvalues {worst_value:.2e} < 1e-6"));
    c.check(worst_mode < 1e-4, format!("modes {worst_mode:.2e} < 1e-4"));
    let ten = solve_eigenproblem(stats, 10).unwrap();
    let mut ortho: f64 = 0.0;
    for i in 0..ten.len() {
        for j in 0..ten.len() {
            let e = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((dot(&ten[i].mode, &ten[j].mode) - e).abs());
        }
    }
    c.check(ortho < 1e-8, format!("orthonormality {ortho:.2e} < 1e-8"));
    let trace = stats.covariance_trace();
    let sum: f64 = build.spectrum.iter().sum();
    let rel = (sum - trace).abs() / trace;
    c.check(rel < 1e-8, format!("trace {rel:.2e} < 1e-8"));
    c.done()
}

fn spline_suite() -> Outcome {
    let mut c = Checks::new();
    let tables = synth_ensemble(common::SEED, common::K, common::L, common::B_L).unwrap();
    let curves: Vec<_> = tables.iter().map(|t| fit_monotone_spline(t).unwrap()).collect();
    let mut knot_err: f64 = 0.0;
    for (t, cv) in tables.iter().zip(&curves) {
        for &(b, h) in &t.samples {
            knot_err = knot_err.max((cv.evaluate(b).unwrap() - h).abs() / h.abs().max(1.0));
        }
    }
    c.check(knot_err == 0.0, format!("interpolation error at knots {knot_err:e}"));
    let dense = 20_000;
    let monotone = curves.iter().all(|cv| {
        let v: Vec<f64> = (0..=dense)
            .map(|i| cv.evaluate(2.2 * i as f64 / dense as f64).unwrap())
            .collect();
        v.windows(2).all(|w| w[1] >= w[0])
    });
    c.check(monotone, format!("monotone at {} points per curve", dense + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let cv = &curves[rng.gen_range(0..curves.len())];
        let s = rng.gen_range(0.0..2.0);
        if cv.knots().iter().any(|k| (k - s).abs() < 1e-4) {
            continue;
        }
        let d = cv.derivative(s).unwrap();
        let fd = (cv.evaluate(s + h).unwrap() - cv.evaluate(s - h).unwrap()) / (2.0 * h);
        worst = worst.max((fd - d).abs() / d.abs());
        checked += 1;
    }
    c.check(worst < 1e-6, format!("derivative vs FD at 1000 points {worst:.2e} < 1e-6"));
    c.done()
}

fn solver_opts() -> SolverOptions {
    SolverOptions {
        newton_tolerance: 1e-10,
        ..SolverOptions::default()
    }
}

fn dense_linear_solve(space: &FemSpace, g: &Geometry, nu_iron: f64, current: f64) -> Vec<f64> {
    let mesh = space.mesh();
    let n = space.free_count();
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut f = DVector::<f64>::zeros(n);
    let j = g.current_density(current);
    for t in mesh.triangles() {
        let p: Vec<[f64; 2]> = t.nodes.iter().map(|&i| mesh.nodes()[i]).collect();
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let area = 0.5 * (c[2] * b[1] - c[1] * b[2]);
        let nu = match t.region {
            Region::Iron => nu_iron,
            _ => 1.0 / MU0,
        };
        let src = match t.region {
            Region::CoilPositive => j,
            Region::CoilNegative => -j,
            _ => 0.0,
        };
        for r in 0..3 {
            let Some(dr) = space.dof(t.nodes[r]) else { continue };
            f[dr] += src * area / 3.0;
            for s in 0..3 {
                if let Some(ds) = space.dof(t.nodes[s]) {
                    k[(dr, ds)] += nu * (b[r] * b[s] + c[r] * c[s]) / (4.0 * area);
                }
            }
        }
    }
    space.expand(k.cholesky().unwrap().solve(&f).as_slice())
}

fn forward_solver_suite() -> Outcome {
    let mut c = Checks::new();
    let start = Instant::now();
    let model = common::shared_model();
    let mean = model.curve_unchecked(&[0.0; 4]);
    let mats = Materials::new(&mean);
    let o = solver_opts();

    let (g, coarse) = common::coarse_space();
    let zero = coarse.solve(&mats, 0.0, None, &o).unwrap();
    let exact_zero = zero.a.iter().all(|v| *v == 0.0) && zero.b.iter().all(|b| *b == [0.0, 0.0]);
    c.check(exact_zero, "zero current gives zero field".into());

    let iron = Linear::relative_permeability(1000.0);
    let reference = dense_linear_solve(&coarse, &g, iron.nu, 200.0);
    let scale = reference.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut lin: f64 = 0.0;
    for kind in [LinearSolverKind::Direct, LinearSolverKind::ConjugateGradient] {
        let ok = SolverOptions {
            linear_solver: kind,
            ..o.clone()
        };
        let sol = coarse.solve(&Materials::new(&iron), 200.0, None, &ok).unwrap();
        let err = sol.a.iter().zip(&reference).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        lin = lin.max(err / scale);
    }
    c.check(lin <= 1e-10, format!("constant reluctivity vs dense solve {lin:.2e} <= 1e-10"));

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base = coarse.solve(&mats, 300.0, None, &o).unwrap();
    let amax = base.a.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut tangent: f64 = 0.0;
    for _ in 0..10 {
        let s = rng.gen_range(0.2..1.5);
        let a: Vec<f64> = (0..base.a.len())
            .map(|i| match coarse.dof(i) {
                Some(_) => s * base.a[i] + 0.05 * amax * rng.gen_range(-1.0..1.0),
                None => 0.0,
            })
            .collect();
        let v: Vec<f64> = (0..coarse.free_count()).map(|_| rng.gen_range(-1.0..1.0) * amax).collect();
        let mut kv = vec![0.0; v.len()];
        coarse.tangent_matrix(&mats, &a).matvec(&v, &mut kv);
        let h = 1e-7;
        let dv = coarse.expand(&v);
        let shifted = |sign: f64| {
            let x: Vec<f64> = a.iter().zip(&dv).map(|(a, d)| a + sign * h * d).collect();
            coarse.residual(&mats, 0.0, &x)
        };
        let (rp, rm) = (shifted(1.0), shifted(-1.0));
        let num = rp
            .iter()
            .zip(&rm)
            .zip(&kv)
            .map(|((p, m), k)| ((p - m) / (2.0 * h) - k).powi(2))
            .sum::<f64>()
            .sqrt();
        let den = kv.iter().map(|k| k * k).sum::<f64>().sqrt();
        tangent = tangent.max(num / den);
    }
    c.check(tangent < 1e-5, format!("tangent vs FD residual {tangent:.2e} < 1e-5"));

    let g = Geometry::default();
    let center = |r: u32| {
        let space = FemSpace::new(generate_dipole_mesh(&g, r).unwrap(), g.turns).unwrap();
        let sol = space.solve(&mats, 97.2, None, &o).unwrap();
        let p = probe_b(space.mesh(), &sol, &[[0.0, 0.0]]).unwrap()[0];
        p[0].hypot(p[1])
    };
    let (b0, b1) = (center(0), center(1));
    let change = (b1 - b0).abs() / b1;
    c.check(change < 0.01, format!("gap-center refinement change {:.3}% < 1%", 100.0 * change));

    let (_, space) = common::default_space();
    let mut prev: Option<Vec<f64>> = None;
    let mut by = Vec::new();
    for &i in &bhident::inversion::log_spaced(20.0, 450.0, 8) {
        let sol = space.solve(&mats, i, prev.as_deref(), &o).unwrap();
        by.push(probe_b(space.mesh(), &sol, &[[0.0, 0.0]]).unwrap()[0][1]);
        prev = Some(sol.a);
    }
    let monotone = by[0] > 0.0 && by.windows(2).all(|w| w[1] > w[0]);
    c.check(
        monotone,
        format!("monotone loading, B_y {:.4} .. {:.4} T", by[0], by[by.len() - 1]),
    );
    c.time(start.elapsed(), Duration::from_secs(120));
    c.done()
}

fn sensitivity_validation() -> Outcome {
    let mut c = Checks::new();
    let start = Instant::now();
    let model = common::shared_model();
    let (g, space) = common::default_space();
    let o = SolverOptions {
        newton_tolerance: 1e-11,
        retain_tangent: true,
        ..SolverOptions::default()
    };
    let nominal = 97.2;
    let mean = model.curve_unchecked(&[0.0; 4]);
    let base = space.solve(&Materials::new(&mean), nominal, None, &o).unwrap();
    let fields = solve_all_modes(&space, &base, model, &o).unwrap();
    let ranking = rank_probes(&space, &g, &fields, &g.candidate_probes(), 5).unwrap();
    let points: Vec<[f64; 2]> = ranking.iter().map(|r| r.position).collect();
    let by = |b: &[[f64; 2]]| -> Vec<f64> {
        stencils(space.mesh(), &points, true)
            .unwrap()
            .iter()
            .map(|s| s.apply(b)[1])
            .collect()
    };
    let b0 = by(&base.b);
    let eps = 1e-3;
    let mut worst: f64 = 0.0;
    for m in 0..model.dim() {
        let exact = by(&fields[m].b_prime);
        let mut y = [0.0; 4];
        y[m] = eps;
        let curve = model.curve_unchecked(&y);
        let sol = space.solve(&Materials::new(&curve), nominal, Some(&base.a), &o).unwrap();
        for ((p, q), e) in by(&sol.b).iter().zip(&b0).zip(&exact) {
            worst = worst.max(((p - q) / eps - e).abs() / e.abs());
        }
    }
    c.check(worst < 0.01, format!("Gateaux vs FD at 5 probes {:.3}% < 1%", 100.0 * worst));
    let (d_top, d_center) = (g.distance_to_shim(points[0]), g.distance_to_shim([0.0, 0.0]));
    c.check(
        d_top < d_center,
        format!("top probe {:.1} mm from shim vs gap center {:.1} mm", 1e3 * d_top, 1e3 * d_center),
    );
    c.time(start.elapsed(), Duration::from_secs(300));
    c.done()
}

fn run_pipeline(cfg: &RunConfig) -> bhident::Result<(Vec<u8>, bhident::inversion::IdentificationResult)> {
    pipeline::cmd_build_model(cfg)?;
    pipeline::cmd_sensitivity(cfg)?;
    pipeline::cmd_make_data(cfg)?;
    let r = pipeline::cmd_identify(cfg)?;
    let model = std::fs::read(cfg.paths.output.join(pipeline::MODEL_FILE)).unwrap();
    Ok((model, r))
}

fn ground_truth_recovery() -> Outcome {
    let mut c = Checks::new();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.paths.output = dir.path().to_path_buf();
    let start = Instant::now();
    let (_, r) = single_threaded(|| run_pipeline(&cfg)).unwrap();
    let elapsed = start.elapsed();
    let m = r.metrics.as_ref().unwrap();
    c.check(m.max_e_rel < 0.02, format!("max E_rel {:.4e} < 2e-2", m.max_e_rel));
    c.check(m.max_e_abs < 5e-4, format!("max E_abs {:.4e} T < 5e-4 T", m.max_e_abs));
    c.notes.push(format!(
        "{} iterations, {} forward solves, {} cache hits",
        r.objective_history.len(),
        r.counters.forward_solves,
        r.counters.cache_hits
    ));
    let model = MaterialModel::from_json(
        &std::fs::read_to_string(dir.path().join(pipeline::MODEL_FILE)).unwrap(),
    )
    .unwrap();
    let y0 = r.y0.as_ref().unwrap();
    let offsets: Vec<String> = (0..model.dim())
        .map(|k| {
            let width = model.y_max[k] - model.y_min[k];
            format!("{:.3}", (r.y_hat[k] - y0[k]).abs() / width)
        })
        .collect();
    c.notes.push(format!("|y_hat - y0| / box width = [{}]", offsets.join(", ")));
    c.time(elapsed, Duration::from_secs(30 * 60));
    c.done()
}

fn sphere(y: &[f64]) -> Evaluation {
    Evaluation::ok(y.iter().map(|v| v * v).sum())
}

fn rosenbrock(y: &[f64]) -> Evaluation {
    Evaluation::ok((1.0 - y[0]).powi(2) + 100.0 * (y[1] - y[0] * y[0]).powi(2))
}

fn optimizer_sanity() -> Outcome {
    let mut c = Checks::new();
    let cfg = PsoConfig {
        iterations: 200,
        seed: 2024,
        ..PsoConfig::default()
    };
    let s = minimize(sphere, &[-1.0; 4], &[1.0; 4], &cfg).unwrap();
    c.check(s.best_value < 1e-6, format!("sphere {:.2e} < 1e-6", s.best_value));
    let rcfg = PsoConfig {
        iterations: 400,
        stall_iterations: 0,
        ..cfg.clone()
    };
    let r = minimize(rosenbrock, &[-2.0; 2], &[2.0; 2], &rcfg).unwrap();
    let dist = (r.best[0] - 1.0).hypot(r.best[1] - 1.0);
    c.check(dist < 1e-2, format!("Rosenbrock distance to (1,1) {dist:.2e} < 1e-2"));
    let same = minimize(sphere, &[-1.0; 4], &[1.0; 4], &cfg).unwrap() == s
        && minimize(rosenbrock, &[-2.0; 2], &[2.0; 2], &rcfg).unwrap() == r;
    c.check(same, "identical reruns for a fixed seed".into());
    c.done()
}

fn reproducibility() -> Outcome {
    let mut c = Checks::new();
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = RunConfig::default();
            cfg.paths.output = dir.path().to_path_buf();
            cfg.inversion.pso.swarm_size = 8;
            cfg.inversion.pso.iterations = 4;
            single_threaded(|| run_pipeline(&cfg)).unwrap()
        })
        .collect();
    c.check(runs[0].0 == runs[1].0, format!("model JSON byte-identical ({} bytes)", runs[0].0.len()));
    c.check(
        runs[0].1.y_hat == runs[1].1.y_hat,
        format!("identical y_hat {:?}", runs[0].1.y_hat),
    );
    c.done()
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("spectrum decay", spectrum_decay),
        ("KLE correctness", kle_correctness),
        ("monotone spline suite", spline_suite),
        ("forward solver suite", forward_solver_suite),
        ("sensitivity validation", sensitivity_validation),
        ("ground-truth recovery", ground_truth_recovery),
        ("optimizer sanity", optimizer_sanity),
        ("reproducibility", reproducibility),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            ),
        });
        failed += usize::from(!outcome.pass);
        println!(
            "criterion {n} {name}: {} ({}) [{:.1} s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
