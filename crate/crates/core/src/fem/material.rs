use crate::curves::MonotoneCurve;
use crate::kle::ModelCurve;
use crate::MU0;

/// Scalar constitutive law `|H| = h(|B|)` used inside the finite-element assembly.
pub trait Reluctivity: Sync {
    /// `h(b)` and `h'(b)` for `b ≥ 0`.
    fn field(&self, b: f64) -> (f64, f64);

    /// Magnetic energy density `∫₀ᵇ h`.
    fn energy(&self, b: f64) -> f64;

    /// Secant reluctivity `h(b)/b`, continued by `h'(0)` at the origin.
    fn nu(&self, b: f64) -> f64 {
        if b < B_EPS {
            self.field(0.0).1
        } else {
            self.field(b).0 / b
        }
    }
}

/// Below this flux density the secant reluctivity is replaced by its limit.
pub const B_EPS: f64 = 1e-12;

/// Constant reluctivity `h = ν b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub nu: f64,
}

impl Linear {
    pub fn vacuum() -> Self {
        Self { nu: 1.0 / MU0 }
    }

    pub fn relative_permeability(mu_r: f64) -> Self {
        Self { nu: 1.0 / (MU0 * mu_r) }
    }
}

impl Reluctivity for Linear {
    fn field(&self, b: f64) -> (f64, f64) {
        (self.nu * b, self.nu)
    }

    fn energy(&self, b: f64) -> f64 {
        0.5 * self.nu * b * b
    }
}

impl Reluctivity for MonotoneCurve {
    fn field(&self, b: f64) -> (f64, f64) {
        self.value_and_slope(b)
    }

    fn energy(&self, b: f64) -> f64 {
        self.integral(b)
    }
}

impl Reluctivity for ModelCurve {
    fn field(&self, b: f64) -> (f64, f64) {
        self.value_and_slope(b)
    }

    fn energy(&self, b: f64) -> f64 {
        self.integral(b)
    }
}

impl<T: Reluctivity + ?Sized> Reluctivity for &T {
    fn field(&self, b: f64) -> (f64, f64) {
        (**self).field(b)
    }

    fn energy(&self, b: f64) -> f64 {
        (**self).energy(b)
    }
}
