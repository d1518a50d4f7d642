//! Truncated Karhunen-Loève expansion of a B ↦ H curve ensemble.
//!
//! The covariance operator is discretized with piecewise-linear hat functions on a
//! uniform grid; every `L²([0, B_L])` integral, including the Galerkin matrices, uses the
//! composite trapezoid rule, so the generalized eigenproblem reads
//! `W·C·W·β = λ·W·β` with `W` the diagonal trapezoid weights. It is solved through the
//! symmetric form `W^½·C·W^½`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curves::{hermite, monotone_curve_through, MonotoneCurve};
use crate::{Error, Result};

/// Default number of grid points for the covariance discretization.
pub const DEFAULT_GRID_SIZE: usize = 200;
/// Default truncation order.
pub const DEFAULT_TRUNCATION: usize = 4;
/// Default derivative floor α in A/m per T.
pub const DEFAULT_ALPHA: f64 = 1.0;

const SHRINK_FACTOR: f64 = 0.9;
const MAX_SHRINK_ITERATIONS: usize = 50;

/// Uniform grid with `n` points on `[0, b_max]`.
pub fn uniform_grid(n: usize, b_max: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b_max
            } else {
                b_max * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Composite trapezoid weights for the given grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Trapezoid approximation of `∫ f·g` over the grid.
pub fn inner_product(weights: &[f64], f: &[f64], g: &[f64]) -> f64 {
    weights
        .iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

/// Sample mean and covariance of the ensemble on a common grid.
#[derive(Debug, Clone)]
pub struct EnsembleStatistics {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Curve values on the grid, one row per realization.
    pub samples: Vec<Vec<f64>>,
}

impl EnsembleStatistics {
    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.grid)
    }

    /// `∫ Cov(f(s), f(s)) ds` by the trapezoid rule.
    pub fn covariance_trace(&self) -> f64 {
        self.weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.covariance[(i, i)])
            .sum()
    }
}

pub fn estimate_statistics(curves: &[MonotoneCurve], n: usize) -> Result<EnsembleStatistics> {
    let k = curves.len();
    if k < 2 {
        return Err(Error::InsufficientEnsemble(k));
    }
    if n < 50 {
        return Err(Error::Input(format!("grid size must be at least 50, got {n}")));
    }
    let b_max = curves
        .iter()
        .map(MonotoneCurve::b_max)
        .fold(f64::INFINITY, f64::min);
    let grid = uniform_grid(n, b_max);
    let samples: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| grid.iter().map(|&s| c.value_and_slope(s).0).collect())
        .collect();
    // shifted accumulation keeps the mean exact for identical realizations
    let first = samples[0].clone();
    let mut mean = vec![0.0; n];
    for row in &samples[1..] {
        for ((m, v), f) in mean.iter_mut().zip(row).zip(&first) {
            *m += v - f;
        }
    }
    for (m, f) in mean.iter_mut().zip(&first) {
        *m = f + *m / k as f64;
    }
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut covariance = DMatrix::zeros(n, n);
    let norm = 1.0 / (k - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let c: f64 = centered.iter().map(|r| r[i] * r[j]).sum::<f64>() * norm;
            covariance[(i, j)] = c;
            covariance[(j, i)] = c;
        }
    }
    Ok(EnsembleStatistics {
        grid,
        mean,
        covariance,
        samples,
    })
}

/// One eigenvalue of the covariance operator with its L²-normalized mode on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub mode: Vec<f64>,
}

/// Full spectrum (descending) together with the grid modes.
fn symmetric_spectrum(stats: &EnsembleStatistics) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let w = stats.weights();
    let n = w.len();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| sqrt_w[i] * stats.covariance[(i, j)] * sqrt_w[j]);
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, 10_000).ok_or_else(|| {
        let wmin = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let wmax = w.iter().cloned().fold(0.0, f64::max);
        Error::Numerical(format!(
            "symmetric eigen-solver did not converge (n = {n}, weight ratio {:.3e})",
            wmax / wmin
        ))
    })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])] / sqrt_w[r]);
    Ok((values, vectors))
}

/// All eigenvalues of the discretized covariance operator in descending order.
pub fn spectrum(stats: &EnsembleStatistics) -> Result<Vec<f64>> {
    symmetric_spectrum(stats).map(|(v, _)| v)
}

pub fn solve_eigenproblem(stats: &EnsembleStatistics, m_max: usize) -> Result<Vec<Eigenpair>> {
    let n = stats.grid.len();
    if m_max > n {
        return Err(Error::Input(format!("requested {m_max} modes on a {n}-point grid")));
    }
    let (values, vectors) = symmetric_spectrum(stats)?;
    let w = stats.weights();
    let pairs = (0..m_max)
        .map(|m| {
            let mut mode: Vec<f64> = vectors.column(m).iter().copied().collect();
            let norm = inner_product(&w, &mode, &mode).sqrt();
            for v in &mut mode {
                *v /= norm;
            }
            // sign convention: nonnegative at B_L, largest entry when B_L is a node of the mode
            let last = mode[n - 1];
            let pivot = if last.abs() > 1e-12 * norm_inf(&mode) {
                last
            } else {
                *mode.iter().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap()
            };
            if pivot < 0.0 {
                mode.iter_mut().for_each(|v| *v = -*v);
            }
            Eigenpair {
                value: values[m],
                mode,
            }
        })
        .collect();
    Ok(pairs)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Natural cubic spline through grid values, stored as Hermite data so that sums of
/// modes stay piecewise cubic on the same knots.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMode {
    values: Vec<f64>,
    tangents: Vec<f64>,
}

impl GridMode {
    pub fn new(grid: &[f64], values: Vec<f64>) -> Self {
        let tangents = natural_spline_slopes(grid, &values);
        Self { values, tangents }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tangents(&self) -> &[f64] {
        &self.tangents
    }

    /// Slope of the interpolant itself, taken from the left at `B_L`.
    pub fn segment_slope(&self, grid: &[f64], s: f64) -> f64 {
        let i = hermite::locate(grid, s);
        hermite::eval(
            grid[i],
            grid[i + 1],
            self.values[i],
            self.values[i + 1],
            self.tangents[i],
            self.tangents[i + 1],
            s,
        )
        .1
    }

    /// Mode value and slope, continued past `B_L` by a ramp decaying to zero at `2·B_L`.
    pub fn value_and_slope(&self, grid: &[f64], s: f64) -> (f64, f64) {
        let n = grid.len();
        let b_l = grid[n - 1];
        if s >= b_l {
            let end = self.values[n - 1];
            let ramp = 1.0 - (s - b_l) / b_l;
            return if ramp > 0.0 {
                (end * ramp, -end / b_l)
            } else {
                (0.0, 0.0)
            };
        }
        let i = hermite::locate(grid, s);
        hermite::eval(
            grid[i],
            grid[i + 1],
            self.values[i],
            self.values[i + 1],
            self.tangents[i],
            self.tangents[i + 1],
            s,
        )
    }
}

/// First derivatives at the knots of the natural cubic spline interpolant.
fn natural_spline_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    // second derivatives with M_0 = M_{n-1} = 0 via the Thomas algorithm
    let mut second = vec![0.0; n];
    if n > 2 {
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for k in 0..m {
            let i = k + 1;
            diag[k] = 2.0 * (h[i - 1] + h[i]);
            upper[k] = h[i];
            rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        for k in 1..m {
            let factor = h[k] / diag[k - 1];
            diag[k] -= factor * upper[k - 1];
            rhs[k] -= factor * rhs[k - 1];
        }
        second[m] = rhs[m - 1] / diag[m - 1];
        for k in (0..m - 1).rev() {
            second[k + 1] = (rhs[k] - upper[k] * second[k + 2]) / diag[k];
        }
    }
    let mut slopes = vec![0.0; n];
    for i in 0..n - 1 {
        slopes[i] = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * second[i] + second[i + 1]) / 6.0;
    }
    slopes[n - 1] =
        (y[n - 1] - y[n - 2]) / h[n - 2] + h[n - 2] * (second[n - 2] + 2.0 * second[n - 1]) / 6.0;
    slopes
}

/// The parameterized material curve `s ↦ f_HB(y, s)` for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
    tangents: Vec<f64>,
    prefix: Vec<f64>,
    mean_end: f64,
    tail_slope: f64,
    ramp: f64,
}

impl ModelCurve {
    pub fn b_max(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    #[inline]
    pub fn value_and_slope(&self, s: f64) -> (f64, f64) {
        let n = self.knots.len();
        let b_l = self.knots[n - 1];
        if s >= b_l {
            let d = s - b_l;
            let t = 1.0 - d / b_l;
            let (rv, rs) = if t > 0.0 {
                (self.ramp * t, -self.ramp / b_l)
            } else {
                (0.0, 0.0)
            };
            return (self.mean_end + self.tail_slope * d + rv, self.tail_slope + rs);
        }
        let i = hermite::locate(&self.knots, s);
        hermite::eval(
            self.knots[i],
            self.knots[i + 1],
            self.values[i],
            self.values[i + 1],
            self.tangents[i],
            self.tangents[i + 1],
            s,
        )
    }

    /// `∫₀ˢ f_HB(y, b) db`.
    pub fn integral(&self, s: f64) -> f64 {
        let n = self.knots.len();
        let b_l = self.knots[n - 1];
        if s < b_l {
            let i = hermite::locate(&self.knots, s);
            return self.prefix[i]
                + hermite::integral(
                    self.knots[i],
                    self.knots[i + 1],
                    self.values[i],
                    self.values[i + 1],
                    self.tangents[i],
                    self.tangents[i + 1],
                    s,
                );
        }
        let d = s - b_l;
        let ramp_part = if d < b_l {
            self.ramp * (d - 0.5 * d * d / b_l)
        } else {
            0.5 * self.ramp * b_l
        };
        self.prefix[n - 1] + self.mean_end * d + 0.5 * self.tail_slope * d * d + ramp_part
    }

    /// Smallest derivative over `[0, B_L]` and over the continuation, with its location.
    /// A location strictly above `B_L` refers to the continuation.
    pub fn min_slope(&self) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.knots.len() - 1 {
            let (x0, x1) = (self.knots[i], self.knots[i + 1]);
            let h = x1 - x0;
            let (m0, m1) = (self.tangents[i], self.tangents[i + 1]);
            let dy = (self.values[i] - self.values[i + 1]) / h;
            // slope on the segment is a*t^2 + b*t + c
            let a = 6.0 * dy + 3.0 * m0 + 3.0 * m1;
            let b = -6.0 * dy - 4.0 * m0 - 2.0 * m1;
            let mut cands = vec![(m0, x0), (m1, x1)];
            if a > 0.0 {
                let t = -b / (2.0 * a);
                if t > 0.0 && t < 1.0 {
                    cands.push((a * t * t + b * t + m0, x0 + t * h));
                }
            }
            for c in cands {
                if c.0 < best.0 {
                    best = c;
                }
            }
        }
        let b_l = self.b_max();
        let ramp_slope = self.tail_slope - self.ramp / b_l;
        for c in [(ramp_slope, 1.5 * b_l), (self.tail_slope, 2.5 * b_l)] {
            if c.0 < best.0 {
                best = c;
            }
        }
        best
    }
}

/// Mean curve plus `M` weighted KLE modes with the admissible parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelData", into = "ModelData")]
pub struct MaterialModel {
    grid: Vec<f64>,
    mean_curve: MonotoneCurve,
    eigenvalues: Vec<f64>,
    modes: Vec<GridMode>,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
    pub y_samples: Vec<Vec<f64>>,
    pub y_mean: Vec<f64>,
    pub y_cov: Vec<Vec<f64>>,
    pub alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelData {
    grid: Vec<f64>,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    modes: Vec<Vec<f64>>,
    y_min: Vec<f64>,
    y_max: Vec<f64>,
    y_samples: Vec<Vec<f64>>,
    y_mean: Vec<f64>,
    y_cov: Vec<Vec<f64>>,
    alpha: f64,
}

impl From<ModelData> for MaterialModel {
    fn from(d: ModelData) -> Self {
        let mean_curve = monotone_curve_through(d.grid.clone(), d.mean, d.alpha);
        let modes = d
            .modes
            .into_iter()
            .map(|v| GridMode::new(&d.grid, v))
            .collect();
        MaterialModel {
            grid: d.grid,
            mean_curve,
            eigenvalues: d.eigenvalues,
            modes,
            y_min: d.y_min,
            y_max: d.y_max,
            y_samples: d.y_samples,
            y_mean: d.y_mean,
            y_cov: d.y_cov,
            alpha: d.alpha,
        }
    }
}

impl From<MaterialModel> for ModelData {
    fn from(m: MaterialModel) -> Self {
        ModelData {
            mean: m.mean_curve.values().to_vec(),
            grid: m.grid,
            eigenvalues: m.eigenvalues,
            modes: m.modes.into_iter().map(|g| g.values).collect(),
            y_min: m.y_min,
            y_max: m.y_max,
            y_samples: m.y_samples,
            y_mean: m.y_mean,
            y_cov: m.y_cov,
            alpha: m.alpha,
        }
    }
}

/// Realizations `Y^k` of the KLE coefficients for curves sampled on the grid.
pub fn project(
    grid: &[f64],
    mean: &[f64],
    pairs: &[Eigenpair],
    samples: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let w = trapezoid_weights(grid);
    samples
        .iter()
        .map(|row| {
            let centered: Vec<f64> = row.iter().zip(mean).map(|(v, m)| v - m).collect();
            pairs
                .iter()
                .map(|p| inner_product(&w, &centered, &p.mode) / p.value.sqrt())
                .collect()
        })
        .collect()
}

pub fn build_model(
    stats: &EnsembleStatistics,
    eigenpairs: &[Eigenpair],
    m: usize,
    curves: &[MonotoneCurve],
    alpha: f64,
) -> Result<MaterialModel> {
    let positive = eigenpairs.iter().take_while(|p| p.value > 0.0).count();
    if m == 0 || m > positive {
        return Err(Error::ModelConstruction(format!(
            "truncation order {m} exceeds the {positive} positive eigenvalues available"
        )));
    }
    for w in eigenpairs[..m].windows(2) {
        if w[1].value >= w[0].value {
            return Err(Error::ModelConstruction(
                "retained eigenvalues are not strictly decreasing".into(),
            ));
        }
    }
    let pairs = &eigenpairs[..m];
    let samples: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| stats.grid.iter().map(|&s| c.value_and_slope(s).0).collect())
        .collect();
    let y_samples = project(&stats.grid, &stats.mean, pairs, &samples);
    let k = y_samples.len();
    if k < 2 {
        return Err(Error::InsufficientEnsemble(k));
    }
    let mut y_min = vec![f64::INFINITY; m];
    let mut y_max = vec![f64::NEG_INFINITY; m];
    let mut y_mean = vec![0.0; m];
    for row in &y_samples {
        for j in 0..m {
            y_min[j] = y_min[j].min(row[j]);
            y_max[j] = y_max[j].max(row[j]);
            y_mean[j] += row[j] / k as f64;
        }
    }
    let mut y_cov = vec![vec![0.0; m]; m];
    for row in &y_samples {
        for a in 0..m {
            for b in 0..m {
                y_cov[a][b] += (row[a] - y_mean[a]) * (row[b] - y_mean[b]) / (k - 1) as f64;
            }
        }
    }

    let mut model = MaterialModel {
        mean_curve: monotone_curve_through(stats.grid.clone(), stats.mean.clone(), alpha),
        modes: pairs
            .iter()
            .map(|p| GridMode::new(&stats.grid, p.mode.clone()))
            .collect(),
        grid: stats.grid.clone(),
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
        y_min,
        y_max,
        y_samples,
        y_mean,
        y_cov,
        alpha,
    };
    model.enforce_monotone_box()?;
    Ok(model)
}

impl MaterialModel {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn b_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean_curve(&self) -> &MonotoneCurve {
        &self.mean_curve
    }

    pub fn modes(&self) -> &[GridMode] {
        &self.modes
    }

    /// Value and slope of mode `m` (zero-based).
    pub fn mode_value_and_slope(&self, m: usize, s: f64) -> (f64, f64) {
        self.modes[m].value_and_slope(&self.grid, s)
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.check_box(y).is_ok()
    }

    pub fn check_box(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::Input(format!(
                "parameter vector has {} components, model has {}",
                y.len(),
                self.dim()
            )));
        }
        for (component, &value) in y.iter().enumerate() {
            let (lower, upper) = (self.y_min[component], self.y_max[component]);
            if !(value >= lower && value <= upper) {
                return Err(Error::OutOfBox {
                    component,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// `f_HB(y, ·)` without the box check; used for box corners and perturbation studies.
    pub fn curve_unchecked(&self, y: &[f64]) -> ModelCurve {
        let n = self.grid.len();
        let mut values = self.mean_curve.values().to_vec();
        let mut tangents = self.mean_curve.tangents().to_vec();
        let mut ramp = 0.0;
        for ((mode, &lambda), &ym) in self.modes.iter().zip(&self.eigenvalues).zip(y) {
            let c = lambda.sqrt() * ym;
            if c == 0.0 {
                continue;
            }
            for i in 0..n {
                values[i] += c * mode.values[i];
                tangents[i] += c * mode.tangents[i];
            }
            ramp += c * mode.values[n - 1];
        }
        let prefix = hermite::prefix_integrals(&self.grid, &values, &tangents);
        ModelCurve {
            knots: self.grid.clone(),
            values,
            tangents,
            prefix,
            mean_end: self.mean_curve.values()[n - 1],
            tail_slope: self.mean_curve.extrapolation_slope(),
            ramp,
        }
    }

    pub fn curve(&self, y: &[f64]) -> Result<ModelCurve> {
        self.check_box(y)?;
        Ok(self.curve_unchecked(y))
    }

    pub fn evaluate_model(&self, y: &[f64], s: f64) -> Result<f64> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::Domain { value: s });
        }
        Ok(self.curve(y)?.value_and_slope(s).0)
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        (0..1usize << m)
            .map(|mask| {
                (0..m)
                    .map(|j| {
                        if mask >> j & 1 == 1 {
                            self.y_max[j]
                        } else {
                            self.y_min[j]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Shrinks the box about `y_mean` until every corner curve has slope above α.
    fn enforce_monotone_box(&mut self) -> Result<()> {
        for _ in 0..=MAX_SHRINK_ITERATIONS {
            let mut offending = vec![false; self.dim()];
            let mut failing = None;
            for corner in self.corners() {
                let curve = self.curve_unchecked(&corner);
                let (slope, at) = curve.min_slope();
                if slope > self.alpha {
                    continue;
                }
                failing.get_or_insert((corner.clone(), slope, at));
                // blame the mode contributing the most negative slope there
                let b_l = self.b_max();
                let worst = (0..self.dim())
                    .map(|j| {
                        let d = if at > b_l {
                            self.mode_value_and_slope(j, at).1
                        } else {
                            self.modes[j].segment_slope(&self.grid, at)
                        };
                        (j, self.eigenvalues[j].sqrt() * corner[j] * d)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(j, _)| j)
                    .unwrap();
                offending[worst] = true;
            }
            let Some((corner, slope, at)) = failing else {
                return Ok(());
            };
            if offending.iter().all(|o| !o) {
                return Err(Error::ModelConstruction(format!(
                    "corner {corner:?} has slope {slope:.3e} at B = {at:.4} T and no mode can be blamed"
                )));
            }
            for (j, _) in offending.iter().enumerate().filter(|(_, o)| **o) {
                let c = self.y_mean[j];
                self.y_min[j] = c - SHRINK_FACTOR * (c - self.y_min[j]);
                self.y_max[j] = c + SHRINK_FACTOR * (self.y_max[j] - c);
            }
        }
        let failing = self
            .corners()
            .into_iter()
            .find(|c| self.curve_unchecked(c).min_slope().0 <= self.alpha)
            .unwrap_or_default();
        Err(Error::ModelConstruction(format!(
            "corner {failing:?} remains non-monotone after {MAX_SHRINK_ITERATIONS} shrink iterations"
        )))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Everything produced while building a model from fitted curves.
#[derive(Debug, Clone)]
pub struct KleBuild {
    pub stats: EnsembleStatistics,
    pub spectrum: Vec<f64>,
    pub model: MaterialModel,
}

pub fn build_from_curves(
    curves: &[MonotoneCurve],
    grid_size: usize,
    truncation: usize,
    alpha: f64,
) -> Result<KleBuild> {
    let stats = estimate_statistics(curves, grid_size)?;
    let spectrum = spectrum(&stats)?;
    let pairs = solve_eigenproblem(&stats, truncation)?;
    let model = build_model(&stats, &pairs, truncation, curves, alpha)?;
    Ok(KleBuild {
        stats,
        spectrum,
        model,
    })
}
