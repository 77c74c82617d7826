//! Conversion between laboratory parameters and normalized simulation units.
//!
//! Times are normalized to the pulse parameter τ and lengths to
//! `z0 = τ/|β1|`. The coupling `γ = ħ ω_p² n2 Φ_p / (c S)` with
//! `Φ_p = sqrt(I_p / ħω_p)` carries units of `√s/m²`; the amplitude
//! equations for transversally normalized fields need `√s/m`, so the
//! normalized coupling is `γ √S · z0 / √τ`, which is dimensionless. The
//! [`Quantity`] type tracks dimensions through every step.

use std::ops::{Div, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// FWHM of `sech²(t/τ)` divided by τ: `2 arccosh(√2)`.
pub const SECH_FWHM_FACTOR: f64 = 1.762_747_174_039_086;
/// σ/τ above which the response is wider than the pulse.
pub const MAX_SIGMA_OVER_TAU: f64 = 0.5;

/// Exponents of metre, second and kilogram, stored doubled so that half
/// powers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Dim {
    pub m2: i32,
    pub s2: i32,
    pub kg2: i32,
}

impl Dim {
    pub const NONE: Dim = Dim { m2: 0, s2: 0, kg2: 0 };

    pub const fn new(m: i32, s: i32, kg: i32) -> Self {
        Dim {
            m2: 2 * m,
            s2: 2 * s,
            kg2: 2 * kg,
        }
    }

    pub fn is_dimensionless(&self) -> bool {
        *self == Self::NONE
    }
}

impl std::fmt::Display for Dim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        for (name, e) in [("kg", self.kg2), ("m", self.m2), ("s", self.s2)] {
            match e {
                0 => {}
                2 => parts.push(name.to_string()),
                e if e % 2 == 0 => parts.push(format!("{name}^{}", e / 2)),
                e => parts.push(format!("{name}^({e}/2)")),
            }
        }
        if parts.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

/// A value with SI dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub dim: Dim,
}

impl Quantity {
    pub const fn new(value: f64, dim: Dim) -> Self {
        Self { value, dim }
    }

    pub const fn scalar(value: f64) -> Self {
        Self::new(value, Dim::NONE)
    }

    pub fn sqrt(self) -> Self {
        // halving doubled exponents must stay integral
        assert!(
            self.dim.m2 % 2 == 0 && self.dim.s2 % 2 == 0 && self.dim.kg2 % 2 == 0,
            "square root of {} is below the half-power resolution",
            self.dim
        );
        Self::new(
            self.value.sqrt(),
            Dim {
                m2: self.dim.m2 / 2,
                s2: self.dim.s2 / 2,
                kg2: self.dim.kg2 / 2,
            },
        )
    }

    pub fn powi(self, n: i32) -> Self {
        Self::new(
            self.value.powi(n),
            Dim {
                m2: self.dim.m2 * n,
                s2: self.dim.s2 * n,
                kg2: self.dim.kg2 * n,
            },
        )
    }

    /// The value, provided the dimension is `expected`.
    pub fn in_units(self, expected: Dim) -> Result<f64> {
        if self.dim != expected {
            return Err(Error::invariant(
                "dimensional consistency",
                format!("expected {expected}, got {}", self.dim),
            ));
        }
        Ok(self.value)
    }
}

impl Mul for Quantity {
    type Output = Quantity;
    fn mul(self, o: Quantity) -> Quantity {
        Quantity::new(
            self.value * o.value,
            Dim {
                m2: self.dim.m2 + o.dim.m2,
                s2: self.dim.s2 + o.dim.s2,
                kg2: self.dim.kg2 + o.dim.kg2,
            },
        )
    }
}

impl Div for Quantity {
    type Output = Quantity;
    fn div(self, o: Quantity) -> Quantity {
        Quantity::new(
            self.value / o.value,
            Dim {
                m2: self.dim.m2 - o.dim.m2,
                s2: self.dim.s2 - o.dim.s2,
                kg2: self.dim.kg2 - o.dim.kg2,
            },
        )
    }
}

pub mod dims {
    use super::Dim;
    pub const METRE: Dim = Dim::new(1, 0, 0);
    pub const SECOND: Dim = Dim::new(0, 1, 0);
    pub const AREA: Dim = Dim::new(2, 0, 0);
    pub const WATT: Dim = Dim::new(2, -3, 1);
    pub const JOULE_SECOND: Dim = Dim::new(2, -1, 1);
    pub const VELOCITY: Dim = Dim::new(1, -1, 0);
    pub const INVERSE_VELOCITY: Dim = Dim::new(-1, 1, 0);
    pub const RATE: Dim = Dim::new(0, -1, 0);
    /// Unit of `ħω²n2Φ/(cS)`: `√s / m²`.
    pub const GAMMA_RAW: Dim = Dim { m2: -4, s2: 1, kg2: 0 };
    /// Unit the amplitude equations need: `√s / m`.
    pub const GAMMA_FIELD: Dim = Dim { m2: -2, s2: 1, kg2: 0 };
}

/// Laboratory parameters. Units follow common practice: `n2` in cm²/W,
/// `i_p` in W/cm², everything else SI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Nonlinear index, cm²/W.
    pub n2: f64,
    /// Pump intensity, W/cm².
    #[serde(rename = "I_p")]
    pub i_p: f64,
    /// Pump wavelength, m. Required.
    #[serde(default)]
    pub lambda_p: Option<f64>,
    /// Effective beam area, m². Required.
    #[serde(rename = "S", default)]
    pub area: Option<f64>,
    /// Group-velocity mismatch, s/m; its sign is irrelevant.
    pub beta1: f64,
    /// Pulse FWHM duration, s.
    pub tau_fwhm: f64,
    /// Response time, s.
    pub sigma_phys: f64,
}

impl PhysicalParams {
    /// The fused-silica example set with the pump wavelength and beam area
    /// left open.
    pub fn fused_silica_example() -> Self {
        Self {
            n2: 3e-16,
            i_p: 11e12,
            lambda_p: None,
            area: None,
            beta1: 2e-15 / 1e3,
            tau_fwhm: 10e-15,
            sigma_phys: 500e-18,
        }
    }

    pub fn lambda_p(&self) -> Result<f64> {
        self.lambda_p
            .ok_or_else(|| Error::param("lambda_p", "pump wavelength is required (metres)"))
    }

    pub fn area(&self) -> Result<f64> {
        self.area
            .ok_or_else(|| Error::param("S", "effective beam area is required (m^2)"))
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = self.lambda_p()?;
        let area = self.area()?;
        for (name, v) in [
            ("n2", self.n2),
            ("I_p", self.i_p),
            ("lambda_p", lambda),
            ("S", area),
            ("tau_fwhm", self.tau_fwhm),
            ("sigma_phys", self.sigma_phys),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.beta1.is_finite() && self.beta1 != 0.0) {
            return Err(Error::param("beta1", "must be finite and nonzero"));
        }
        Ok(())
    }
}

/// `γ = ħ ω_p² n2 Φ_p / (c S)`, in `√s/m²`.
pub fn gamma_physical(p: &PhysicalParams) -> Result<Quantity> {
    p.validate()?;
    let hbar = Quantity::new(HBAR, dims::JOULE_SECOND);
    let c = Quantity::new(SPEED_OF_LIGHT, dims::VELOCITY);
    let lambda = Quantity::new(p.lambda_p()?, dims::METRE);
    let omega = Quantity::scalar(2.0 * std::f64::consts::PI) * c / lambda;
    // cm²/W → m²/W, W/cm² → W/m²
    let n2 = Quantity::new(p.n2 * 1e-4, Dim { m2: 4, s2: 0, kg2: 0 }) / Quantity::new(1.0, dims::WATT);
    let intensity = Quantity::new(p.i_p * 1e4, dims::WATT) / Quantity::new(1.0, dims::AREA);
    let area = Quantity::new(p.area()?, dims::AREA);
    let flux = (intensity / (hbar * omega)).sqrt();
    let gamma = hbar * omega.powi(2) * n2 * flux / (c * area);
    debug_assert_eq!(gamma.dim, dims::GAMMA_RAW);
    Ok(gamma)
}

/// `z0 = τ/|β1|`.
pub fn z0_interaction_length(tau: f64, beta1: f64) -> Result<f64> {
    if !(tau > 0.0) || !(beta1.is_finite() && beta1 != 0.0) {
        return Err(Error::param("tau/beta1", "need tau > 0 and beta1 != 0"));
    }
    Ok(tau / beta1.abs())
}

/// How the pulse duration maps onto the sech parameter τ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauReading {
    /// `τ = FWHM / 2 arccosh(√2)`.
    SechFromFwhm,
    /// `τ = FWHM` taken as the sech parameter directly.
    FwhmAsSech,
}

impl TauReading {
    pub fn tau(self, fwhm: f64) -> f64 {
        match self {
            TauReading::SechFromFwhm => fwhm / SECH_FWHM_FACTOR,
            TauReading::FwhmAsSech => fwhm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TauReading::SechFromFwhm => "tau = FWHM/1.7627",
            TauReading::FwhmAsSech => "tau = FWHM",
        }
    }
}

/// Normalized parameters derived from [`PhysicalParams`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Normalized {
    pub reading: TauReading,
    pub tau: f64,
    pub z0: f64,
    pub sigma_over_tau: f64,
    /// Dimensionless coupling for the amplitude equations.
    pub gamma: f64,
    /// `γ_phys` in `√s/m²`.
    pub gamma_physical: f64,
    pub area: f64,
    pub warnings: Vec<String>,
}

impl Normalized {
    /// Propagation length in metres for a normalized length `l`.
    pub fn length_m(&self, l: f64) -> f64 {
        l * self.z0
    }
}

pub fn normalize(p: &PhysicalParams, reading: TauReading) -> Result<Normalized> {
    let g = gamma_physical(p)?;
    let tau = reading.tau(p.tau_fwhm);
    let z0 = z0_interaction_length(tau, p.beta1)?;
    let area = p.area()?;
    let field = g * Quantity::new(area, dims::AREA).sqrt();
    let gamma = (field * Quantity::new(z0, dims::METRE) / Quantity::new(tau, dims::SECOND).sqrt())
        .in_units(Dim::NONE)?;
    let sigma_over_tau = p.sigma_phys / tau;
    let mut warnings = Vec::new();
    if sigma_over_tau > MAX_SIGMA_OVER_TAU {
        warnings.push(format!(
            "sigma/tau = {sigma_over_tau:.3} > {MAX_SIGMA_OVER_TAU}: response wider than the pulse, outside the model's regime"
        ));
    }
    Ok(Normalized {
        reading,
        tau,
        z0,
        sigma_over_tau,
        gamma,
        gamma_physical: g.value,
        area,
        warnings,
    })
}

/// Both τ readings.
pub fn normalize_both(p: &PhysicalParams) -> Result<[Normalized; 2]> {
    Ok([
        normalize(p, TauReading::SechFromFwhm)?,
        normalize(p, TauReading::FwhmAsSech)?,
    ])
}

/// Inverse of [`normalize`]: `(sigma_phys, gamma_physical)` from a
/// normalized fragment.
pub fn denormalize(n: &Normalized) -> (f64, f64) {
    let sigma = n.sigma_over_tau * n.tau;
    let gamma = n.gamma * n.tau.sqrt() / (n.z0 * n.area.sqrt());
    (sigma, gamma)
}
