//! Non-instantaneous nonlinear response.
//!
//! The time-domain response couples an ancilla time `t_a` to a signal/idler
//! pair `(t_s, t_i)` through
//!
//! ```text
//! h(t_a, t_s, t_i) = exp(-(t_s - t_a)^2 / 2σ^2) exp(-(t_i - t_a)^2 / 2σ^2) / (2π σ^2)
//! ```
//!
//! which factorizes as `g(t_s - t_a) g(t_i - t_a)` with a unit-mass Gaussian
//! `g` of width `σ`. Its frequency-domain form factor is
//! `exp(-σ^2 (ω_s^2 + ω_i^2) / 2)`. All times are in units of the pulse
//! duration τ.
//!
//! The propagator only relies on the [`SeparableKernel`] interface, so other
//! response shapes with the same product structure can be plugged in.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A response `h(t_a, t_s, t_i) = g(t_s - t_a) g(t_i - t_a)` with a compactly
/// supported one-dimensional factor `g`.
pub trait SeparableKernel: Send + Sync {
    /// The factor `g(t)`; zero for `|t| > support_radius()`.
    fn factor(&self, t: f64) -> f64;

    /// Half-width of the support of [`factor`](Self::factor).
    fn support_radius(&self) -> f64;

    /// Response width σ, used for step-size and resolution checks.
    fn width(&self) -> f64;

    fn eval_h(&self, t_a: f64, t_s: f64, t_i: f64) -> f64 {
        self.factor(t_s - t_a) * self.factor(t_i - t_a)
    }
}

/// Gaussian response of width `sigma`, truncated at `truncation_radius · sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    sigma: f64,
    truncation_radius: f64,
}

impl GaussianKernel {
    pub const DEFAULT_TRUNCATION: f64 = 5.0;
    pub const MIN_TRUNCATION: f64 = 3.0;

    pub fn new(sigma: f64, truncation_radius: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
        }
        if !(truncation_radius.is_finite() && truncation_radius >= Self::MIN_TRUNCATION) {
            return Err(Error::param(
                "truncation_radius",
                format!("must be >= {}, got {truncation_radius}", Self::MIN_TRUNCATION),
            ));
        }
        Ok(Self {
            sigma,
            truncation_radius,
        })
    }

    pub fn with_sigma(sigma: f64) -> Result<Self> {
        Self::new(sigma, Self::DEFAULT_TRUNCATION)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// Absolute cutoff `truncation_radius · sigma`.
    pub fn cutoff(&self) -> f64 {
        self.truncation_radius * self.sigma
    }

    /// Time-domain response. Zero when either `|t_s - t_a|` or `|t_i - t_a|`
    /// exceeds the cutoff.
    pub fn eval_h(&self, t_a: f64, t_s: f64, t_i: f64) -> f64 {
        SeparableKernel::eval_h(self, t_a, t_s, t_i)
    }

    /// Untruncated frequency-domain form factor (the energy-conserving
    /// delta factor is implicit in the amplitude equations).
    pub fn eval_h_freq(&self, omega_s: f64, omega_i: f64) -> f64 {
        (-self.sigma * self.sigma * (omega_s * omega_s + omega_i * omega_i) / 2.0).exp()
    }

    /// Peak-normalized coupling factor `K(ξ) = exp(-ξ^2 / 4σ^2)` of the local
    /// oscillator reduction, with ξ measured from the front center ξ₀.
    pub fn coupling_factor(&self, xi: f64) -> f64 {
        (-xi * xi / (4.0 * self.sigma * self.sigma)).exp()
    }

    /// The two identical one-dimensional factors of the response.
    pub fn separable_factors(&self) -> (FactorProfile, FactorProfile) {
        let g = FactorProfile {
            sigma: self.sigma,
            cutoff: self.cutoff(),
        };
        (g, g)
    }
}

impl SeparableKernel for GaussianKernel {
    fn factor(&self, t: f64) -> f64 {
        gaussian_factor(t, self.sigma, self.cutoff())
    }

    fn support_radius(&self) -> f64 {
        self.cutoff()
    }

    fn width(&self) -> f64 {
        self.sigma
    }
}

/// `g(t) = exp(-t^2/2σ^2) / sqrt(2πσ^2)` truncated at `cutoff`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorProfile {
    sigma: f64,
    cutoff: f64,
}

impl FactorProfile {
    pub fn eval(&self, t: f64) -> f64 {
        gaussian_factor(t, self.sigma, self.cutoff)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

#[inline]
fn gaussian_factor(t: f64, sigma: f64, cutoff: f64) -> f64 {
    if t.abs() > cutoff {
        return 0.0;
    }
    (-t * t / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt()
}
