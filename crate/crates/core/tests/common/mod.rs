#![allow(dead_code)]

use bhident::curves::{fit_monotone_spline, synth_ensemble, MonotoneCurve};
use bhident::fem::{generate_dipole_mesh, FemSpace, Geometry};
use bhident::kle::{build_from_curves, KleBuild, MaterialModel};
use std::sync::OnceLock;
use nalgebra::DMatrix;

pub const SEED: u64 = 7;
pub const K: usize = 26;
pub const L: usize = 28;
pub const B_L: f64 = 2.0;

pub fn synthetic_curves() -> Vec<MonotoneCurve> {
    synth_ensemble(SEED, K, L, B_L)
        .unwrap()
        .iter()
        .map(|t| fit_monotone_spline(t).unwrap())
        .collect()
}

pub fn synthetic_build() -> KleBuild {
    build_from_curves(&synthetic_curves(), 200, 4, 1.0).unwrap()
}

pub fn shared_model() -> &'static MaterialModel {
    static MODEL: OnceLock<MaterialModel> = OnceLock::new();
    MODEL.get_or_init(|| synthetic_build().model)
}

pub fn default_space() -> (Geometry, FemSpace) {
    let g = Geometry::default();
    let mesh = generate_dipole_mesh(&g, 0).unwrap();
    let space = FemSpace::new(mesh, g.turns).unwrap();
    (g, space)
}

/// Same geometry with a gap mesh of roughly 3.5 cells across, for fast tests.
pub fn coarse_space() -> (Geometry, FemSpace) {
    let g = Geometry {
        gap_mesh_size: 0.02,
        ..Geometry::default()
    };
    let mesh = generate_dipole_mesh(&g, 0).unwrap();
    let space = FemSpace::new(mesh, g.turns).unwrap();
    (g, space)
}

/// Piecewise cubic written in power form around the left knot.
pub struct FcOracle {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl FcOracle {
    /// Monotone tangents following the original limiter steps, interval by interval.
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            m[k] = if delta[k - 1] * delta[k] <= 0.0 {
                0.0
            } else {
                0.5 * (delta[k - 1] + delta[k])
            };
        }
        for k in 0..n - 1 {
            if delta[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / delta[k];
            let b = m[k + 1] / delta[k];
            let r = a.hypot(b);
            if r > 3.0 {
                let t = 3.0 / r;
                m[k] = t * a * delta[k];
                m[k + 1] = t * b * delta[k];
            }
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    pub fn tangents(&self) -> &[f64] {
        &self.m
    }

    pub fn eval(&self, s: f64) -> f64 {
        let k = match self.x.iter().rposition(|&v| v <= s) {
            Some(k) => k.min(self.x.len() - 2),
            None => 0,
        };
        let h = self.x[k + 1] - self.x[k];
        let d = (self.y[k + 1] - self.y[k]) / h;
        let c2 = (3.0 * d - 2.0 * self.m[k] - self.m[k + 1]) / h;
        let c3 = (self.m[k] + self.m[k + 1] - 2.0 * d) / (h * h);
        let t = s - self.x[k];
        self.y[k] + t * (self.m[k] + t * (c2 + t * c3))
    }
}

/// Covariance by explicit double loop over grid pairs with a naive mean.
pub fn brute_covariance(curves: &[MonotoneCurve], grid: &[f64]) -> Vec<Vec<f64>> {
    let k = curves.len() as f64;
    let vals: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| grid.iter().map(|&s| c.evaluate(s).unwrap()).collect())
        .collect();
    let mean: Vec<f64> = (0..grid.len())
        .map(|i| vals.iter().map(|v| v[i]).sum::<f64>() / k)
        .collect();
    let mut cov = vec![vec![0.0; grid.len()]; grid.len()];
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let mut acc = 0.0;
            for v in &vals {
                acc += (v[i] - mean[i]) * (v[j] - mean[j]);
            }
            cov[i][j] = acc / (k - 1.0);
        }
    }
    cov
}

/// Trapezoid weights computed from interval lengths.
pub fn trapezoid(grid: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

pub fn l2(w: &[f64], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
}

/// Nyström collocation `Σ_j C(s_i, s_j) w_j φ(s_j) = λ φ(s_i)` solved as a
/// nonsymmetric eigenproblem. Returns the leading `m` pairs with modes in the
/// trapezoid L² norm.
pub fn nystrom(cov: &[Vec<f64>], grid: &[f64], m: usize) -> Vec<(f64, Vec<f64>)> {
    let n = grid.len();
    let w = trapezoid(grid);
    let a = DMatrix::from_fn(n, n, |i, j| cov[i][j] * w[j]);
    let mut lambdas: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.re).collect();
    lambdas.sort_by(|x, y| y.total_cmp(x));
    lambdas
        .iter()
        .take(m)
        .map(|&lam| {
            let shift = lam * (1.0 + 1e-9);
            let lu = (&a - DMatrix::identity(n, n) * shift).lu();
            let mut v = nalgebra::DVector::from_element(n, 1.0);
            for _ in 0..8 {
                v = lu.solve(&v).unwrap();
                v /= v.amax();
            }
            let mut phi: Vec<f64> = v.iter().copied().collect();
            let norm = l2(&w, &phi);
            phi.iter_mut().for_each(|p| *p /= norm);
            (lam, phi)
        })
        .collect()
}
