mod common;

use std::sync::Mutex;

use bhident::fem::SolverOptions;
use bhident::inversion::*;
use bhident::kle::MaterialModel;
use bhident::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const PROBES: [[f64; 2]; 5] = [
    [0.0884, 0.0272],
    [-0.0884, 0.0272],
    [0.0476, 0.0136],
    [0.0, 0.0],
    [0.068, -0.0272],
];

fn forward() -> ForwardModel {
    let (_, space) = common::coarse_space();
    ForwardModel::new(space, SolverOptions::default())
}

fn currents() -> Vec<f64> {
    log_spaced(20.0, 450.0, 8)
}

fn interior(model: &MaterialModel, u: [f64; 4]) -> Vec<f64> {
    (0..4)
        .map(|m| model.y_min[m] + u[m] * (model.y_max[m] - model.y_min[m]))
        .collect()
}

#[test]
fn objective_vanishes_at_the_truth_and_grows_away_from_it() {
    let model = common::shared_model();
    let fwd = forward();
    let y0 = interior(model, [0.6, 0.4, 0.55, 0.45]);
    let obs = fwd.observe(model, &y0, &currents(), &PROBES).unwrap();
    let g0 = objective(&y0, &obs, model, &fwd).unwrap();
    assert!(g0 < 1e-12, "{g0:e}");
    let mut y = y0.clone();
    y[0] += 0.1 * 0.5 * (model.y_max[0] - model.y_min[0]);
    assert!(objective(&y, &obs, model, &fwd).unwrap() > g0);
}

#[test]
fn duplicated_probes_double_the_objective() {
    let model = common::shared_model();
    let fwd = forward();
    let y0 = interior(model, [0.6, 0.4, 0.55, 0.45]);
    let y = interior(model, [0.3, 0.5, 0.5, 0.5]);
    let single = fwd.observe(model, &y0, &currents(), &PROBES).unwrap();
    let doubled_probes: Vec<[f64; 2]> = PROBES.iter().chain(&PROBES).copied().collect();
    let doubled = fwd.observe(model, &y0, &currents(), &doubled_probes).unwrap();
    let g1 = objective(&y, &single, model, &fwd).unwrap();
    let g2 = objective(&y, &doubled, model, &fwd).unwrap();
    assert!(g1 > 0.0);
    assert!((g2 - 2.0 * g1).abs() <= 1e-12 * g2, "{g2:e} vs {g1:e}");
}

#[test]
fn regularization_penalty() {
    let model = common::shared_model();
    let fwd = forward();
    let y0 = interior(model, [0.6, 0.4, 0.55, 0.45]);
    let y = interior(model, [0.3, 0.7, 0.5, 0.2]);
    let obs = fwd.observe(model, &y0, &currents(), &PROBES).unwrap();
    let g = objective(&y, &obs, model, &fwd).unwrap();
    assert_eq!(objective_regularized(&y, &obs, model, &fwd, 0.0).unwrap(), g);

    let f = Objective::new(model, &fwd, &obs).unwrap().with_regularization(2.5).unwrap();
    assert_eq!(f.penalty(&model.y_mean), 0.0);
    // Mahalanobis oracle through a general LU inverse
    let cov = DMatrix::from_fn(4, 4, |i, j| model.y_cov[i][j]);
    let inv = cov.lu().try_inverse().unwrap();
    let d = DVector::from_iterator(4, y.iter().zip(&model.y_mean).map(|(a, b)| a - b));
    let expected = 2.5 * d.dot(&(&inv * &d));
    assert!((f.penalty(&y) - expected).abs() <= 1e-9 * expected);
    let reg = objective_regularized(&y, &obs, model, &fwd, 2.5).unwrap();
    assert!((reg - g - expected).abs() <= 1e-9 * reg);

    let mut doc: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    doc["y_cov"] = serde_json::json!([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0]
    ]);
    let identity = MaterialModel::from_json(&doc.to_string()).unwrap();
    let f = Objective::new(&identity, &fwd, &obs).unwrap().with_regularization(1.0).unwrap();
    let mut e1 = identity.y_mean.clone();
    e1[0] += 1.0;
    assert!((f.penalty(&e1) - 1.0).abs() < 1e-14);
    assert!(Objective::new(model, &fwd, &obs).unwrap().with_regularization(-1.0).is_err());
}

#[test]
fn failed_forward_solves_evaluate_to_the_sentinel() {
    let model = common::shared_model();
    let (_, space) = common::coarse_space();
    let fwd = forward();
    let obs = fwd.observe(model, &model.y_mean, &currents(), &PROBES).unwrap();
    let starved = ForwardModel::new(
        space,
        SolverOptions {
            max_newton_steps: 1,
            ..SolverOptions::default()
        },
    );
    let f = Objective::new(model, &starved, &obs).unwrap();
    let e = f.evaluate(&model.y_mean);
    assert!(e.flagged);
    assert_eq!(e.value, DIVERGENCE_SENTINEL);
    let c = f.counters();
    assert_eq!(c.forward_solves + c.skipped, 8);
    assert_eq!(c.flagged, 1);
}

#[test]
fn cache_serves_repeated_points() {
    let model = common::shared_model();
    let fwd = forward();
    let obs = fwd.observe(model, &model.y_mean, &currents(), &PROBES).unwrap();
    let f = Objective::new(model, &fwd, &obs).unwrap();
    let y = interior(model, [0.2, 0.5, 0.5, 0.5]);
    let a = f.evaluate(&y);
    let b = f.evaluate(&y);
    assert_eq!(a, b);
    let c = f.counters();
    assert_eq!((c.requests, c.forward_solves, c.cache_hits), (2, 8, 8));
}

#[test]
fn exact_recovery_has_zero_error() {
    let model = common::shared_model();
    let fwd = forward();
    let y0 = interior(model, [0.6, 0.4, 0.55, 0.45]);
    let mut cur = currents();
    cur.extend([500.0, 550.0]);
    let axis: Vec<[f64; 2]> = (0..9).map(|i| [-0.08 + 0.02 * i as f64, 0.0]).collect();
    let validation = fwd.observe(model, &y0, &cur, &axis).unwrap();
    let m = error_metrics(&y0, &y0, model, &validation, &fwd).unwrap();
    assert_eq!(m.max_e_rel, 0.0);
    assert!(m.max_e_abs <= 1e-12);
    assert!(m.e_rel.iter().all(|e| e.b > 0.0 && e.b <= 2.0));
    assert_eq!(m.e_abs.len(), 10);
}

#[test]
fn absolute_error_is_symmetric() {
    let model = common::shared_model();
    let fwd = forward();
    let ya = interior(model, [0.6, 0.4, 0.55, 0.45]);
    let yb = interior(model, [0.4, 0.6, 0.5, 0.5]);
    let cur = [100.0, 300.0, 500.0];
    let axis = [[-0.04, 0.0], [0.0, 0.0], [0.04, 0.0]];
    let va = fwd.observe(model, &ya, &cur, &axis).unwrap();
    let vb = fwd.observe(model, &yb, &cur, &axis).unwrap();
    let ab = error_metrics(&ya, &yb, model, &vb, &fwd).unwrap();
    let ba = error_metrics(&yb, &ya, model, &va, &fwd).unwrap();
    assert_eq!(ab.e_abs, ba.e_abs);
    assert!(ab.max_e_abs > 0.0);
}

fn sphere(y: &[f64]) -> Evaluation {
    Evaluation::ok(y.iter().map(|v| v * v).sum())
}

fn rosenbrock(y: &[f64]) -> Evaluation {
    Evaluation::ok((1.0 - y[0]).powi(2) + 100.0 * (y[1] - y[0] * y[0]).powi(2))
}

#[test]
fn swarm_solves_sphere_and_rosenbrock() {
    let cfg = PsoConfig {
        iterations: 200,
        seed: 2024,
        ..PsoConfig::default()
    };
    let s = minimize(sphere, &[-1.0; 4], &[1.0; 4], &cfg).unwrap();
    assert!(s.best_value < 1e-6, "{:e}", s.best_value);
    assert_eq!(minimize(sphere, &[-1.0; 4], &[1.0; 4], &cfg).unwrap(), s);
    assert!(s.history.windows(2).all(|w| w[1] <= w[0]));

    let cfg = PsoConfig {
        iterations: 400,
        stall_iterations: 0,
        ..cfg
    };
    let r = minimize(rosenbrock, &[-2.0; 2], &[2.0; 2], &cfg).unwrap();
    let dist = (r.best[0] - 1.0).hypot(r.best[1] - 1.0);
    assert!(dist < 1e-2, "{:?}", r.best);
    assert_eq!(rosenbrock(&r.best).value, r.best_value);
}

#[test]
fn swarm_outcome_is_independent_of_thread_count() {
    let cfg = PsoConfig {
        iterations: 50,
        seed: 9,
        ..PsoConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| minimize(rosenbrock, &[-2.0; 2], &[2.0; 2], &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn identification_accounting_and_determinism() {
    let model = common::shared_model();
    let fwd = forward();
    let y0 = interior(model, [0.6, 0.4, 0.55, 0.45]);
    let obs = fwd.observe(model, &y0, &currents(), &PROBES).unwrap();
    let cfg = IdentifyConfig {
        pso: PsoConfig {
            swarm_size: 6,
            iterations: 3,
            ..PsoConfig::default()
        },
        ..IdentifyConfig::default()
    };
    let run = || {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| identify(&obs, model, &fwd, &cfg, None).unwrap())
    };
    let a = run();
    let c = a.counters;
    assert_eq!(a.evaluations, 6 * a.objective_history.len());
    assert_eq!(c.requests, a.evaluations);
    assert_eq!(c.forward_solves, a.evaluations * 8 - c.cache_hits - c.skipped);
    assert!(model.contains(&a.y_hat));
    assert_eq!(a.y0.as_deref(), Some(y0.as_slice()));
    let b = run();
    assert_eq!(a.y_hat, b.y_hat);
    assert_eq!(a.objective_history, b.objective_history);
}

#[test]
fn observation_csv_round_trip() {
    let model = common::shared_model();
    let fwd = forward();
    let obs = fwd.observe(model, &model.y_mean, &[50.0, 150.0], &PROBES).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.csv");
    obs.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("current_A,x_m,y_m,By_T"));
    let back = ObservationSet::read_csv(&path, obs.provenance.clone()).unwrap();
    assert_eq!(back, obs);
    std::fs::write(&path, "current_A,x_m,y_m,By_T\n10,0,0,abc\n").unwrap();
    assert!(ObservationSet::read_csv(&path, Provenance::External).is_err());
}

#[test]
fn log_spaced_currents() {
    let c = currents();
    assert_eq!(c.len(), 8);
    assert_eq!((c[0], c[7]), (20.0, 450.0));
    let r = c[1] / c[0];
    assert!(c.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn particles_stay_in_the_box(
        seed in 0u64..1000,
        inertia in 0.5f64..3.0,
        clamp in 0.5f64..20.0,
        lo in prop::collection::vec(-5.0f64..0.0, 3),
        width in prop::collection::vec(0.01f64..5.0, 3),
    ) {
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        let cfg = PsoConfig {
            swarm_size: 8,
            iterations: 30,
            inertia,
            cognitive: 3.0,
            social: 3.0,
            velocity_clamp: clamp,
            stall_iterations: 0,
            seed,
            ..PsoConfig::default()
        };
        let seen = Mutex::new(Vec::new());
        // pushes particles toward a far corner outside the box
        let out = minimize(
            |y| {
                seen.lock().unwrap().push(y.to_vec());
                Evaluation::ok(y.iter().map(|v| (v - 100.0).powi(2)).sum())
            },
            &lo,
            &hi,
            &cfg,
        )
        .unwrap();
        for y in seen.into_inner().unwrap() {
            for d in 0..3 {
                prop_assert!(y[d] >= lo[d] && y[d] <= hi[d], "{:?}", y);
            }
        }
        prop_assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn invalid_box_is_rejected() {
    let cfg = PsoConfig::default();
    assert!(matches!(minimize(sphere, &[0.0], &[0.0], &cfg), Err(Error::Input(_))));
}
