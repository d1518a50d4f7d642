//! Monotone B ↦ H curves built from permeameter tables.
//!
//! A [`PermeameterTable`] holds the discrete measurement of one specimen; a
//! [`MonotoneCurve`] is the Fritsch-Carlson piecewise cubic Hermite interpolant
//! through it, continued linearly past the last sample.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, MU0};

/// Lower bound for the slope used past the last knot, in A/m per T.
pub const DEFAULT_SLOPE_FLOOR: f64 = 1.0;

/// Cubic Hermite segment kernels shared by every piecewise-cubic curve in the crate.
pub(crate) mod hermite {
    /// Index `i` of the segment `[knots[i], knots[i + 1]]` containing `s`.
    /// Values outside the knot range map onto the first or last segment.
    #[inline]
    pub fn locate(knots: &[f64], s: f64) -> usize {
        let n = knots.len();
        debug_assert!(n >= 2);
        let idx = knots.partition_point(|&k| k <= s);
        idx.saturating_sub(1).min(n - 2)
    }

    /// Value and slope of the Hermite cubic on one segment.
    #[inline]
    pub fn eval(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, s: f64) -> (f64, f64) {
        let h = x1 - x0;
        let t = (s - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * m1;
        let d = (6.0 * t2 - 6.0 * t) * (y0 - y1) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (3.0 * t2 - 2.0 * t) * m1;
        (v, d)
    }

    /// Integral of the Hermite cubic from `x0` to `s`.
    #[inline]
    pub fn integral(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, s: f64) -> f64 {
        let h = x1 - x0;
        let t = (s - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        h * (y0 * (t - t3 + 0.5 * t4)
            + h * m0 * (0.5 * t2 - 2.0 / 3.0 * t3 + 0.25 * t4)
            + y1 * (t3 - 0.5 * t4)
            + h * m1 * (0.25 * t4 - t3 / 3.0))
    }

    /// Cumulative integrals at the knots.
    pub fn prefix_integrals(knots: &[f64], values: &[f64], tangents: &[f64]) -> Vec<f64> {
        let mut acc = Vec::with_capacity(knots.len());
        acc.push(0.0);
        for i in 0..knots.len() - 1 {
            let seg = integral(
                knots[i],
                knots[i + 1],
                values[i],
                values[i + 1],
                tangents[i],
                tangents[i + 1],
                knots[i + 1],
            );
            acc.push(acc[i] + seg);
        }
        acc
    }
}

/// Discrete B ↦ H measurement of one specimen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeameterTable {
    pub specimen_id: String,
    /// `(B [T], H [A/m])` pairs in ascending B.
    pub samples: Vec<(f64, f64)>,
}

impl PermeameterTable {
    pub fn new(specimen_id: impl Into<String>, samples: Vec<(f64, f64)>) -> Self {
        Self {
            specimen_id: specimen_id.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks the table invariants, reporting the first offending sample.
    pub fn validate(&self) -> Result<()> {
        let bad = |index: usize, reason: &str| Error::InvalidTable {
            specimen: self.specimen_id.clone(),
            index,
            reason: reason.to_string(),
        };
        if self.samples.len() < 3 {
            return Err(bad(self.samples.len(), "at least 3 samples are required"));
        }
        for (i, &(b, h)) in self.samples.iter().enumerate() {
            if !b.is_finite() || !h.is_finite() {
                return Err(bad(i, "non-finite value"));
            }
        }
        let (b0, h0) = self.samples[0];
        if b0 != 0.0 || h0 != 0.0 {
            return Err(bad(0, "first sample must be (0, 0)"));
        }
        for i in 1..self.samples.len() {
            let (bp, hp) = self.samples[i - 1];
            let (b, h) = self.samples[i];
            if b <= bp {
                return Err(bad(i, "B not strictly increasing"));
            }
            if h <= hp {
                return Err(bad(i, "H not strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn b_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }
}

/// Monotone, C¹ piecewise cubic map B ↦ H with linear continuation past the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CurveData", into = "CurveData")]
pub struct MonotoneCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
    tangents: Vec<f64>,
    extrapolation_slope: f64,
    prefix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CurveData {
    knots: Vec<f64>,
    values: Vec<f64>,
    tangents: Vec<f64>,
    extrapolation_slope: f64,
}

impl From<CurveData> for MonotoneCurve {
    fn from(d: CurveData) -> Self {
        MonotoneCurve::from_parts(d.knots, d.values, d.tangents, d.extrapolation_slope)
    }
}

impl From<MonotoneCurve> for CurveData {
    fn from(c: MonotoneCurve) -> Self {
        CurveData {
            knots: c.knots,
            values: c.values,
            tangents: c.tangents,
            extrapolation_slope: c.extrapolation_slope,
        }
    }
}

impl MonotoneCurve {
    /// Assembles a curve from precomputed Hermite data. Tangents are trusted to be
    /// monotonicity-preserving; use [`fit_monotone_spline`] to derive them.
    pub fn from_parts(
        knots: Vec<f64>,
        values: Vec<f64>,
        tangents: Vec<f64>,
        extrapolation_slope: f64,
    ) -> Self {
        let prefix = hermite::prefix_integrals(&knots, &values, &tangents);
        Self {
            knots,
            values,
            tangents,
            extrapolation_slope,
            prefix,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tangents(&self) -> &[f64] {
        &self.tangents
    }

    pub fn extrapolation_slope(&self) -> f64 {
        self.extrapolation_slope
    }

    /// Upper end `B_L` of the interpolation interval.
    pub fn b_max(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn evaluate(&self, s: f64) -> Result<f64> {
        check_domain(s)?;
        Ok(self.value_and_slope(s).0)
    }

    pub fn derivative(&self, s: f64) -> Result<f64> {
        check_domain(s)?;
        Ok(self.value_and_slope(s).1)
    }

    /// Unchecked evaluation for hot loops; `s` is expected to be nonnegative.
    #[inline]
    pub fn value_and_slope(&self, s: f64) -> (f64, f64) {
        let n = self.knots.len();
        let last = self.knots[n - 1];
        if s >= last {
            return (
                self.values[n - 1] + self.extrapolation_slope * (s - last),
                self.extrapolation_slope,
            );
        }
        let i = hermite::locate(&self.knots, s);
        let (v, d) = hermite::eval(
            self.knots[i],
            self.knots[i + 1],
            self.values[i],
            self.values[i + 1],
            self.tangents[i],
            self.tangents[i + 1],
            s,
        );
        (v, d.max(0.0))
    }

    /// `∫₀ˢ H(b) db`, the magnetic energy density at flux density `s`.
    pub fn integral(&self, s: f64) -> f64 {
        integral_with(&self.knots, &self.values, &self.tangents, &self.prefix, s)
            + self.tail_integral(s)
    }

    fn tail_integral(&self, s: f64) -> f64 {
        let last = self.b_max();
        if s <= last {
            return 0.0;
        }
        let d = s - last;
        self.values[self.values.len() - 1] * d + 0.5 * self.extrapolation_slope * d * d
    }
}

fn integral_with(knots: &[f64], values: &[f64], tangents: &[f64], prefix: &[f64], s: f64) -> f64 {
    let last = knots[knots.len() - 1];
    if s >= last {
        return prefix[prefix.len() - 1];
    }
    let s = s.max(knots[0]);
    let i = hermite::locate(knots, s);
    prefix[i]
        + hermite::integral(
            knots[i],
            knots[i + 1],
            values[i],
            values[i + 1],
            tangents[i],
            tangents[i + 1],
            s,
        )
}

fn check_domain(s: f64) -> Result<()> {
    if s < 0.0 || s.is_nan() {
        Err(Error::Domain { value: s })
    } else {
        Ok(())
    }
}

/// Fritsch-Carlson tangents for strictly increasing abscissae and nondecreasing ordinates.
pub fn fritsch_carlson_tangents(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let secants: Vec<f64> = (0..n - 1)
        .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for i in 1..n - 1 {
        m[i] = if secants[i - 1] * secants[i] <= 0.0 {
            0.0
        } else {
            0.5 * (secants[i - 1] + secants[i])
        };
    }
    for k in 0..n - 1 {
        let delta = secants[k];
        if delta == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / delta;
        let b = m[k + 1] / delta;
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            m[k] = tau * a * delta;
            m[k + 1] = tau * b * delta;
        }
    }
    m
}

/// Builds a monotone curve through ascending points, floor-limiting the tail slope.
pub fn monotone_curve_through(knots: Vec<f64>, values: Vec<f64>, slope_floor: f64) -> MonotoneCurve {
    let tangents = fritsch_carlson_tangents(&knots, &values);
    let tail = tangents[tangents.len() - 1].max(slope_floor);
    MonotoneCurve::from_parts(knots, values, tangents, tail)
}

pub fn fit_monotone_spline(table: &PermeameterTable) -> Result<MonotoneCurve> {
    fit_monotone_spline_with_floor(table, DEFAULT_SLOPE_FLOOR)
}

pub fn fit_monotone_spline_with_floor(
    table: &PermeameterTable,
    slope_floor: f64,
) -> Result<MonotoneCurve> {
    table.validate()?;
    Ok(monotone_curve_through(
        table.b_values(),
        table.h_values(),
        slope_floor,
    ))
}

/// Saturating closed-form B(H) used to synthesize specimen tables:
/// `B = μ0·H + Bs·x / (1 + x^p)^(1/p)` with `x = μ0·μr·H / Bs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationLaw {
    pub b_sat: f64,
    pub mu_r: f64,
    pub knee: f64,
}

impl SaturationLaw {
    pub fn flux_density(&self, h: f64) -> f64 {
        let x = MU0 * self.mu_r * h / self.b_sat;
        MU0 * h + self.b_sat * x / (1.0 + x.powf(self.knee)).powf(1.0 / self.knee)
    }

    /// Numerical inverse H(B) by safeguarded bisection on the monotone law.
    pub fn field_strength(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = b / MU0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.flux_density(mid) < b {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Settings of the synthetic specimen generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub base: SaturationLaw,
    /// Relative half-spread of each randomized law parameter.
    pub spread: f64,
    /// Exponent of the knee-clustering map `B = B_max·(1 − (1 − t)^γ)`.
    pub clustering: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            base: SaturationLaw {
                b_sat: 2.15,
                mu_r: 4000.0,
                knee: 2.0,
            },
            spread: 0.05,
            clustering: 1.5,
        }
    }
}

/// Shared abscissa grid, clustered toward the saturation knee at the top of the range.
pub fn synthetic_grid(len: usize, b_max: f64, clustering: f64) -> Vec<f64> {
    (0..len)
        .map(|l| {
            let t = l as f64 / (len - 1) as f64;
            if l + 1 == len {
                b_max
            } else {
                b_max * (1.0 - (1.0 - t).powf(clustering))
            }
        })
        .collect()
}

pub fn synth_ensemble(seed: u64, k: usize, l: usize, b_max: f64) -> Result<Vec<PermeameterTable>> {
    synth_ensemble_with(seed, k, l, b_max, &SynthSettings::default())
}

pub fn synth_ensemble_with(
    seed: u64,
    k: usize,
    l: usize,
    b_max: f64,
    settings: &SynthSettings,
) -> Result<Vec<PermeameterTable>> {
    if k < 2 {
        return Err(Error::InsufficientEnsemble(k));
    }
    if l < 5 {
        return Err(Error::Input(format!("synthetic tables need L >= 5, got {l}")));
    }
    if !(b_max > 0.0) {
        return Err(Error::Input(format!("B_max must be positive, got {b_max}")));
    }
    let grid = synthetic_grid(l, b_max, settings.clustering);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables = Vec::with_capacity(k);
    for idx in 0..k {
        let mut draw = || 1.0 + settings.spread * rng.gen_range(-1.0..=1.0);
        let law = SaturationLaw {
            b_sat: settings.base.b_sat * draw(),
            mu_r: settings.base.mu_r * draw(),
            knee: settings.base.knee * draw(),
        };
        let samples = grid.iter().map(|&b| (b, law.field_strength(b))).collect();
        let table = PermeameterTable::new(format!("synth-{idx:03}"), samples);
        table.validate()?;
        tables.push(table);
    }
    Ok(tables)
}

/// Reads one specimen CSV with header `B_T,H_Am`; `#` starts a comment line.
pub fn read_table_csv(path: &Path) -> Result<PermeameterTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut samples = Vec::new();
    let mut seen_header = false;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line.replace(' ', "") != "B_T,H_Am" {
                return Err(parse_err(no + 1, format!("expected header `B_T,H_Am`, found `{line}`")));
            }
            seen_header = true;
            continue;
        }
        let mut cols = line.split(',');
        let (Some(b), Some(h), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(parse_err(no + 1, "expected exactly two columns".into()));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(no + 1, format!("bad number `{}`: {e}", s.trim())))
        };
        samples.push((num(b)?, num(h)?));
    }
    if !seen_header {
        return Err(parse_err(0, "missing header".into()));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let table = PermeameterTable::new(id, samples);
    table.validate()?;
    Ok(table)
}

pub fn write_table_csv(path: &Path, table: &PermeameterTable) -> Result<()> {
    let mut out = String::from("B_T,H_Am\n");
    for &(b, h) in &table.samples {
        out.push_str(&format!("{b:e},{h:e}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an ensemble manifest: one specimen CSV path per line, relative to the manifest.
pub fn read_manifest(path: &Path) -> Result<Vec<PermeameterTable>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut tables = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = PathBuf::from(line);
        let p = if p.is_absolute() { p } else { base.join(p) };
        tables.push(read_table_csv(&p)?);
    }
    Ok(tables)
}
