//! Parameter identification by particle swarm optimization over forward solves.

pub mod observation;
pub mod pso;

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::fem::probe::{stencils, ProbeStencil};
use crate::fem::{FemSpace, Materials, Reluctivity, SolverOptions};
use crate::kle::MaterialModel;
use crate::{Error, Result};

pub use observation::{log_spaced, ObservationSet, Provenance};
pub use pso::{minimize, Evaluation, PsoConfig, PsoOutcome};

/// Objective value assigned when a forward solve fails, in T².
pub const DIVERGENCE_SENTINEL: f64 = 1e6;

/// Number of points of the relative-error grid on `(0, B_L]`.
pub const E_REL_POINTS: usize = 100;

/// Relative error is not evaluated where the reference curve is below this field strength (A/m).
pub const E_REL_MIN_H: f64 = 10.0;

/// Discretized forward problem shared by all objective evaluations.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub space: FemSpace,
    pub options: SolverOptions,
}

impl ForwardModel {
    pub fn new(space: FemSpace, options: SolverOptions) -> Self {
        Self { space, options }
    }

    /// `B_y[n][p]` for increasing currents, warm-starting each solve from the previous one.
    pub fn simulate(
        &self,
        law: &dyn Reluctivity,
        currents: &[f64],
        stencils: &[ProbeStencil],
        solves: Option<&AtomicUsize>,
    ) -> Result<Vec<Vec<f64>>> {
        let mats = Materials::new(law);
        let mut prev: Option<Vec<f64>> = None;
        let mut out = Vec::with_capacity(currents.len());
        for &i in currents {
            if let Some(c) = solves {
                c.fetch_add(1, Ordering::Relaxed);
            }
            let sol = self.space.solve(&mats, i, prev.as_deref(), &self.options)?;
            out.push(stencils.iter().map(|s| s.apply(&sol.b)[1]).collect());
            prev = Some(sol.a);
        }
        Ok(out)
    }

    /// Synthetic observations of the model curve at `y0`.
    pub fn observe(
        &self,
        model: &MaterialModel,
        y0: &[f64],
        currents: &[f64],
        probes: &[[f64; 2]],
    ) -> Result<ObservationSet> {
        let curve = model.curve(y0)?;
        let st = stencils(self.space.mesh(), probes, true)?;
        let data = self.simulate(&curve, currents, &st, None)?;
        Ok(ObservationSet {
            probes: probes.to_vec(),
            currents: currents.to_vec(),
            data,
            provenance: Provenance::Synthetic { y0: y0.to_vec() },
        })
    }
}

/// Forward-solve accounting of an objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvaluationCounters {
    /// Objective evaluations requested.
    pub requests: usize,
    /// Nonlinear solves performed.
    pub forward_solves: usize,
    /// (y, current) pairs served from the cache.
    pub cache_hits: usize,
    /// Solves not attempted after a failure at a lower current.
    pub skipped: usize,
    pub flagged: usize,
}

struct Penalty {
    weight: f64,
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

/// Least-squares misfit `Σ_{n,p} (B_data − B_y(y))²` with caching and optional penalty.
pub struct Objective<'a> {
    model: &'a MaterialModel,
    forward: &'a ForwardModel,
    obs: &'a ObservationSet,
    stencils: Vec<ProbeStencil>,
    penalty: Option<Penalty>,
    cache: Mutex<HashMap<Vec<u64>, Evaluation>>,
    requests: AtomicUsize,
    solves: AtomicUsize,
    hits: AtomicUsize,
    skipped: AtomicUsize,
    flagged: AtomicUsize,
}

impl<'a> Objective<'a> {
    pub fn new(model: &'a MaterialModel, forward: &'a ForwardModel, obs: &'a ObservationSet) -> Result<Self> {
        Ok(Self {
            model,
            forward,
            obs,
            stencils: stencils(forward.space.mesh(), &obs.probes, true)?,
            penalty: None,
            cache: Mutex::new(HashMap::new()),
            requests: AtomicUsize::new(0),
            solves: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
            skipped: AtomicUsize::new(0),
            flagged: AtomicUsize::new(0),
        })
    }

    /// Adds `a·(y − E[Y])ᵀ Cov(Y)⁻¹ (y − E[Y])`.
    pub fn with_regularization(mut self, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Config(format!(
                "regularization weight must be nonnegative, got {weight}"
            )));
        }
        if weight > 0.0 {
            self.penalty = Some(Penalty {
                weight,
                mean: DVector::from_vec(self.model.y_mean.clone()),
                precision: precision_matrix(&self.model.y_cov)?,
            });
        }
        Ok(self)
    }

    pub fn penalty(&self, y: &[f64]) -> f64 {
        match &self.penalty {
            Some(p) => {
                let d = DVector::from_column_slice(y) - &p.mean;
                p.weight * d.dot(&(&p.precision * &d))
            }
            None => 0.0,
        }
    }

    /// Unpenalized misfit without cache or sentinel.
    pub fn misfit(&self, y: &[f64]) -> Result<f64> {
        self.counted_misfit(y).0
    }

    fn counted_misfit(&self, y: &[f64]) -> (Result<f64>, usize) {
        let local = AtomicUsize::new(0);
        let r = self.model.curve(y).and_then(|curve| {
            self.forward
                .simulate(&curve, &self.obs.currents, &self.stencils, Some(&local))
        });
        let done = local.into_inner();
        self.solves.fetch_add(done, Ordering::Relaxed);
        (r.map(|sim| squared_mismatch(&sim, &self.obs.data)), done)
    }

    /// Cached, penalized objective; failures evaluate to [`DIVERGENCE_SENTINEL`] and are flagged.
    pub fn evaluate(&self, y: &[f64]) -> Evaluation {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let key: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
        let n = self.obs.currents.len();
        if let Some(e) = self.cache.lock().unwrap().get(&key) {
            self.hits.fetch_add(n, Ordering::Relaxed);
            if e.flagged {
                self.flagged.fetch_add(1, Ordering::Relaxed);
            }
            return *e;
        }
        let (r, done) = self.counted_misfit(y);
        let e = match r {
            Ok(g) => Evaluation::ok(g + self.penalty(y)),
            Err(_) => {
                self.skipped.fetch_add(n - done, Ordering::Relaxed);
                self.flagged.fetch_add(1, Ordering::Relaxed);
                Evaluation {
                    value: DIVERGENCE_SENTINEL,
                    flagged: true,
                }
            }
        };
        self.cache.lock().unwrap().insert(key, e);
        e
    }

    pub fn counters(&self) -> EvaluationCounters {
        EvaluationCounters {
            requests: self.requests.load(Ordering::Relaxed),
            forward_solves: self.solves.load(Ordering::Relaxed),
            cache_hits: self.hits.load(Ordering::Relaxed),
            skipped: self.skipped.load(Ordering::Relaxed),
            flagged: self.flagged.load(Ordering::Relaxed),
        }
    }
}

fn squared_mismatch(sim: &[Vec<f64>], data: &[Vec<f64>]) -> f64 {
    sim.iter()
        .zip(data)
        .flat_map(|(s, d)| s.iter().zip(d).map(|(a, b)| (a - b) * (a - b)))
        .sum()
}

/// Inverse of the parameter covariance, with a small diagonal jitter if it is not SPD.
pub fn precision_matrix(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = cov.len();
    let c = DMatrix::from_fn(m, m, |i, j| cov[i][j]);
    let chol = c.clone().cholesky().or_else(|| {
        (c + DMatrix::identity(m, m) * 1e-10).cholesky()
    });
    chol.map(|ch| ch.inverse())
        .ok_or_else(|| Error::Numerical("parameter covariance is not positive definite".into()))
}

/// `g(y)`, the unregularized least-squares objective.
pub fn objective(
    y: &[f64],
    obs: &ObservationSet,
    model: &MaterialModel,
    forward: &ForwardModel,
) -> Result<f64> {
    Objective::new(model, forward, obs)?.misfit(y)
}

pub fn objective_regularized(
    y: &[f64],
    obs: &ObservationSet,
    model: &MaterialModel,
    forward: &ForwardModel,
    weight: f64,
) -> Result<f64> {
    let f = Objective::new(model, forward, obs)?.with_regularization(weight)?;
    Ok(f.misfit(y)? + f.penalty(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    pub pso: PsoConfig,
    /// Tikhonov weight `a`.
    pub regularization: f64,
    /// Start one particle at the ensemble mean of the parameters.
    pub anchor_at_mean: bool,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            pso: PsoConfig::default(),
            regularization: 0.0,
            anchor_at_mean: true,
        }
    }
}

/// Relative error of the identified curve at one flux density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    pub b: f64,
    pub e_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub e_rel: Vec<RelativeError>,
    pub max_e_rel: f64,
    pub currents: Vec<f64>,
    pub probes: Vec<[f64; 2]>,
    /// `e_abs[n][p]` in tesla.
    pub e_abs: Vec<Vec<f64>>,
    pub max_e_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub y_hat: Vec<f64>,
    pub best_value: f64,
    pub objective_history: Vec<f64>,
    pub seed: u64,
    pub evaluations: usize,
    pub counters: EvaluationCounters,
    pub y0: Option<Vec<f64>>,
    pub metrics: Option<ErrorMetrics>,
}

impl IdentificationResult {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs the swarm over the admissible box and, with a validation set, the error metrics.
pub fn identify(
    obs: &ObservationSet,
    model: &MaterialModel,
    forward: &ForwardModel,
    config: &IdentifyConfig,
    validation: Option<&ObservationSet>,
) -> Result<IdentificationResult> {
    let f = Objective::new(model, forward, obs)?.with_regularization(config.regularization)?;
    let mut pso = config.pso.clone();
    if config.anchor_at_mean {
        pso.anchor = Some(model.y_mean.clone());
    }
    let out = minimize(|y| f.evaluate(y), &model.y_min, &model.y_max, &pso)?;
    let y0 = match &obs.provenance {
        Provenance::Synthetic { y0 } => Some(y0.clone()),
        Provenance::External => None,
    };
    let metrics = match (&y0, validation) {
        (Some(y0), Some(v)) => Some(error_metrics(&out.best, y0, model, v, forward)?),
        _ => None,
    };
    Ok(IdentificationResult {
        y_hat: out.best,
        best_value: out.best_value,
        objective_history: out.history,
        seed: config.pso.seed,
        evaluations: out.evaluations,
        counters: f.counters(),
        y0,
        metrics,
    })
}

/// Relative curve error on `(0, B_L]` and absolute field error at the validation points.
pub fn error_metrics(
    y_hat: &[f64],
    y0: &[f64],
    model: &MaterialModel,
    validation: &ObservationSet,
    forward: &ForwardModel,
) -> Result<ErrorMetrics> {
    let c_hat = model.curve(y_hat)?;
    let c0 = model.curve(y0)?;
    let b_l = model.b_max();
    let e_rel: Vec<RelativeError> = (1..=E_REL_POINTS)
        .filter_map(|i| {
            let b = b_l * i as f64 / E_REL_POINTS as f64;
            let h0 = c0.value_and_slope(b).0;
            (h0 >= E_REL_MIN_H).then(|| RelativeError {
                b,
                e_rel: (c_hat.value_and_slope(b).0 - h0).abs() / h0,
            })
        })
        .collect();
    let st = stencils(forward.space.mesh(), &validation.probes, true)?;
    let sim = forward.simulate(&c_hat, &validation.currents, &st, None)?;
    let e_abs: Vec<Vec<f64>> = sim
        .iter()
        .zip(&validation.data)
        .map(|(s, d)| s.iter().zip(d).map(|(a, b)| (a - b).abs()).collect())
        .collect();
    Ok(ErrorMetrics {
        max_e_rel: e_rel.iter().map(|e| e.e_rel).fold(0.0, f64::max),
        e_rel,
        currents: validation.currents.clone(),
        probes: validation.probes.clone(),
        max_e_abs: e_abs.iter().flatten().copied().fold(0.0, f64::max),
        e_abs,
    })
}
