use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    /// Swarm evaluations including the initial one.
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity bound as a fraction of the box width per component.
    pub velocity_clamp: f64,
    /// Stop once the global best improved by less than `stall_tolerance` over this many
    /// iterations; 0 disables the check.
    pub stall_iterations: usize,
    pub stall_tolerance: f64,
    pub seed: u64,
    /// Start particle 0 at this point (clamped into the box).
    #[serde(skip)]
    pub anchor: Option<Vec<f64>>,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 24,
            iterations: 60,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            velocity_clamp: 0.5,
            stall_iterations: 10,
            stall_tolerance: 1e-10,
            seed: 1,
            anchor: None,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 || self.iterations == 0 {
            return Err(Error::Config(
                "swarm_size must be at least 2 and iterations positive".into(),
            ));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
            ("velocity_clamp", self.velocity_clamp),
            ("stall_tolerance", self.stall_tolerance),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Objective value plus a flag for failed evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub flagged: bool,
}

impl Evaluation {
    pub fn ok(value: f64) -> Self {
        Self {
            value,
            flagged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Global best after each swarm evaluation.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub flagged: usize,
}

/// Box-constrained particle swarm minimization.
///
/// Random draws happen sequentially in particle order and the global best is reduced in
/// index order, so the outcome depends only on the seed, not on evaluation parallelism.
pub fn minimize<F>(f: F, lower: &[f64], upper: &[f64], config: &PsoConfig) -> Result<PsoOutcome>
where
    F: Fn(&[f64]) -> Evaluation + Sync,
{
    config.validate()?;
    let dim = lower.len();
    if upper.len() != dim || lower.iter().zip(upper).any(|(l, u)| !(u > l)) {
        return Err(Error::Input("PSO box must have lower < upper in every component".into()));
    }
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let vmax: Vec<f64> = width.iter().map(|w| config.velocity_clamp * w).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x: Vec<Vec<f64>> = (0..config.swarm_size)
        .map(|_| (0..dim).map(|d| lower[d] + rng.gen::<f64>() * width[d]).collect())
        .collect();
    if let Some(a) = &config.anchor {
        for d in 0..dim {
            x[0][d] = a[d].clamp(lower[d], upper[d]);
        }
    }
    let mut v: Vec<Vec<f64>> = (0..config.swarm_size)
        .map(|_| {
            (0..dim)
                .map(|d| (2.0 * rng.gen::<f64>() - 1.0) * 0.25 * vmax[d])
                .collect()
        })
        .collect();

    let evaluate = |x: &[Vec<f64>]| -> Vec<Evaluation> {
        x.par_iter().map(|p| f(p)).collect()
    };
    let mut values = evaluate(&x);
    let mut evaluations = values.len();
    let mut flagged: usize = values.iter().filter(|e| e.flagged).count();
    let mut streak = if flagged == values.len() { 1 } else { 0 };
    let mut pbest = x.clone();
    let mut pbest_val: Vec<f64> = values.iter().map(|e| e.value).collect();
    let mut g = 0;
    for i in 1..config.swarm_size {
        if pbest_val[i] < pbest_val[g] {
            g = i;
        }
    }
    let mut gbest = pbest[g].clone();
    let mut gbest_val = pbest_val[g];
    let mut history = vec![gbest_val];

    for _ in 1..config.iterations {
        for (xi, (vi, pi)) in x.iter_mut().zip(v.iter_mut().zip(&pbest)) {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let mut vel = config.inertia * vi[d]
                    + config.cognitive * r1 * (pi[d] - xi[d])
                    + config.social * r2 * (gbest[d] - xi[d]);
                vel = vel.clamp(-vmax[d], vmax[d]);
                let mut pos = xi[d] + vel;
                if pos > upper[d] {
                    pos = upper[d] - (pos - upper[d]);
                    vel = -vel;
                } else if pos < lower[d] {
                    pos = lower[d] + (lower[d] - pos);
                    vel = -vel;
                }
                xi[d] = pos.clamp(lower[d], upper[d]);
                vi[d] = vel;
            }
        }
        values = evaluate(&x);
        evaluations += values.len();
        let bad = values.iter().filter(|e| e.flagged).count();
        flagged += bad;
        streak = if bad == values.len() { streak + 1 } else { 0 };
        if streak >= 3 {
            return Err(Error::Identification(format!(
                "all {} particles failed for 3 consecutive iterations",
                values.len()
            )));
        }
        for (i, e) in values.iter().enumerate() {
            if e.value < pbest_val[i] {
                pbest_val[i] = e.value;
                pbest[i].clone_from(&x[i]);
            }
            if e.value < gbest_val {
                gbest_val = e.value;
                gbest.clone_from(&x[i]);
            }
        }
        history.push(gbest_val);
        let k = config.stall_iterations;
        if k > 0 && history.len() > k && history[history.len() - 1 - k] - gbest_val < config.stall_tolerance {
            break;
        }
    }
    Ok(PsoOutcome {
        best: gbest,
        best_value: gbest_val,
        history,
        evaluations,
        flagged,
    })
}
