//! Initial two-photon waveshapes: rotated, chirped sech products.
//!
//! Rotations act in the `(t_i, t_s)` plane with the idler time as the first
//! coordinate, counter-clockwise for positive `phi`. With that handedness a
//! negative angle lays the long axis of an elongated shape along the diagonal
//! `t_s = t_i`, parallel to the conversion front, so the front sweeps across
//! the short axis.

use std::f64::consts::FRAC_PI_4;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexGrid2D};

/// Relative norm deficit tolerated when a shape is cut off by the grid.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

fn one() -> f64 {
    1.0
}

/// Parametric description of an input waveshape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveshapeSpec {
    #[serde(default = "one")]
    pub tau_s: f64,
    #[serde(default = "one")]
    pub tau_i: f64,
    #[serde(default)]
    pub t_s0: f64,
    #[serde(default)]
    pub t_i0: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default, rename = "C_s", alias = "c_s")]
    pub c_s: f64,
    #[serde(default, rename = "C_i", alias = "c_i")]
    pub c_i: f64,
}

impl Default for WaveshapeSpec {
    fn default() -> Self {
        Self {
            tau_s: 1.0,
            tau_i: 1.0,
            t_s0: 0.0,
            t_i0: 0.0,
            phi: 0.0,
            c_s: 0.0,
            c_i: 0.0,
        }
    }
}

impl WaveshapeSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_s", self.tau_s), ("tau_i", self.tau_i)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("t_s0", self.t_s0),
            ("t_i0", self.t_i0),
            ("phi", self.phi),
            ("C_s", self.c_s),
            ("C_i", self.c_i),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Builds the normalized waveshape on the given axes.
    pub fn build(&self, eta: &Axis, nu: &Axis) -> Result<ComplexGrid2D> {
        self.validate()?;
        let raw = sech_raw(self, eta, nu);
        check_truncation(&raw, 4.0 * self.tau_s * self.tau_i)?;
        let g = raw.normalized()?;
        Ok(if self.c_s != 0.0 || self.c_i != 0.0 {
            apply_chirp(&g, self.c_s, self.c_i)
        } else {
            g
        })
    }
}

#[inline]
fn sech(x: f64) -> f64 {
    // 1/cosh overflows to 0 gracefully for large |x|
    1.0 / x.cosh()
}

fn sech_raw(spec: &WaveshapeSpec, eta: &Axis, nu: &Axis) -> ComplexGrid2D {
    let (sin, cos) = spec.phi.sin_cos();
    ComplexGrid2D::from_fn(*eta, *nu, |ts, ti| {
        let dts = ts - spec.t_s0;
        let dti = ti - spec.t_i0;
        let src_ti = dti * cos + dts * sin;
        let src_ts = -dti * sin + dts * cos;
        Complex64::new(sech(src_ts / spec.tau_s) * sech(src_ti / spec.tau_i), 0.0)
    })
}

fn check_truncation(raw: &ComplexGrid2D, analytic_norm2: f64) -> Result<()> {
    let deficit = (analytic_norm2 - raw.norm2()) / analytic_norm2;
    if deficit.abs() > TRUNCATION_TOLERANCE {
        return Err(Error::SupportClipped(format!(
            "grid captures the sech product only to relative norm error {deficit:.3e} (limit {TRUNCATION_TOLERANCE:e})"
        )));
    }
    Ok(())
}

/// Unrotated, unchirped product `sech((t_s-t_s0)/τ_s)·sech((t_i-t_i0)/τ_i)`,
/// normalized. Fails if the grid cuts off more than [`TRUNCATION_TOLERANCE`]
/// of the norm.
pub fn build_sech_product(spec: &WaveshapeSpec, eta: &Axis, nu: &Axis) -> Result<ComplexGrid2D> {
    let plain = WaveshapeSpec {
        phi: 0.0,
        c_s: 0.0,
        c_i: 0.0,
        ..*spec
    };
    plain.build(eta, nu)
}

/// Intensity centroid `(η̄, ν̄)`.
pub fn centroid(g: &ComplexGrid2D) -> Result<(f64, f64)> {
    let (ea, na) = (g.eta_axis(), g.nu_axis());
    let (mut m, mut me, mut mn) = (0.0, 0.0, 0.0);
    for j in 0..ea.count {
        for k in 0..na.count {
            let p = g.get(j, k).norm_sqr() * g.weight(j, k);
            m += p;
            me += p * ea.coord(j);
            mn += p * na.coord(k);
        }
    }
    if !(m > 0.0) {
        return Err(Error::ZeroNorm("centroid of an all-zero grid"));
    }
    Ok((me / m, mn / m))
}

pub fn normalize(g: &ComplexGrid2D) -> Result<ComplexGrid2D> {
    g.normalized()
}

fn bilinear(g: &ComplexGrid2D, eta: f64, nu: f64) -> Complex64 {
    let (ea, na) = (g.eta_axis(), g.nu_axis());
    let fe = (eta - ea.start) / ea.spacing;
    let fn_ = (nu - na.start) / na.spacing;
    if fe < 0.0 || fn_ < 0.0 || fe > (ea.count - 1) as f64 || fn_ > (na.count - 1) as f64 {
        return Complex64::new(0.0, 0.0);
    }
    let j = (fe.floor() as usize).min(ea.count.saturating_sub(2));
    let k = (fn_.floor() as usize).min(na.count.saturating_sub(2));
    let (u, v) = (fe - j as f64, fn_ - k as f64);
    let at = |jj: usize, kk: usize| {
        if jj < ea.count && kk < na.count {
            g.get(jj, kk)
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    at(j, k) * ((1.0 - u) * (1.0 - v))
        + at(j + 1, k) * (u * (1.0 - v))
        + at(j, k + 1) * ((1.0 - u) * v)
        + at(j + 1, k + 1) * (u * v)
}

/// Rotates a sampled waveshape by `phi` about its intensity centroid with
/// bilinear resampling, then renormalizes.
pub fn rotate(g: &ComplexGrid2D, phi: f64) -> Result<ComplexGrid2D> {
    if phi == 0.0 {
        return g.normalized();
    }
    let (ce, cn) = centroid(g)?;
    let (sin, cos) = phi.sin_cos();
    let (ea, na) = (*g.eta_axis(), *g.nu_axis());

    // Forward image of every occupied cell must stay on the grid.
    let total = g.norm2();
    let mut lost = 0.0;
    for j in 0..ea.count {
        for k in 0..na.count {
            let p = g.get(j, k).norm_sqr() * g.weight(j, k);
            if p == 0.0 {
                continue;
            }
            let (dx, dy) = (na.coord(k) - cn, ea.coord(j) - ce);
            let nu = cn + dx * cos - dy * sin;
            let eta = ce + dx * sin + dy * cos;
            if eta < ea.start || eta > ea.end() || nu < na.start || nu > na.end() {
                lost += p;
            }
        }
    }
    if lost > TRUNCATION_TOLERANCE * total {
        return Err(Error::SupportClipped(format!(
            "rotation by {phi} moves {:.3e} of the norm off the grid",
            lost / total
        )));
    }

    let out = ComplexGrid2D::from_fn(ea, na, |eta, nu| {
        let (dx, dy) = (nu - cn, eta - ce);
        let src_nu = cn + dx * cos + dy * sin;
        let src_eta = ce - dx * sin + dy * cos;
        bilinear(g, src_eta, src_nu)
    });
    out.normalized()
}

/// Multiplies by `exp(i(C_s η² + C_i ν²))` in grid coordinates.
pub fn apply_chirp(g: &ComplexGrid2D, c_s: f64, c_i: f64) -> ComplexGrid2D {
    let (ea, na) = (*g.eta_axis(), *g.nu_axis());
    let mut out = g.clone();
    let vals = out.values_mut();
    for j in 0..ea.count {
        let ps = c_s * ea.coord(j).powi(2);
        for k in 0..na.count {
            let phase = ps + c_i * na.coord(k).powi(2);
            vals[j * na.count + k] *= Complex64::from_polar(1.0, phase);
        }
    }
    out
}

/// The four reference input shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    S1,
    S2,
    S3,
    S4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::S1, Preset::S2, Preset::S3, Preset::S4];

    pub fn spec(self) -> WaveshapeSpec {
        let base = WaveshapeSpec::default();
        match self {
            Preset::S1 => base,
            Preset::S2 => WaveshapeSpec {
                tau_i: 1.0 / 3.0,
                phi: FRAC_PI_4,
                ..base
            },
            Preset::S3 => WaveshapeSpec {
                tau_i: 1.0 / 3.0,
                phi: -FRAC_PI_4,
                ..base
            },
            Preset::S4 => WaveshapeSpec {
                c_s: 10.0,
                c_i: 20.0,
                ..base
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::S1 => "S1",
            Preset::S2 => "S2",
            Preset::S3 => "S3",
            Preset::S4 => "S4",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::S1 => "separable sech product, tau_s = tau_i = 1",
            Preset::S2 => "tau_s = 1, tau_i = 1/3, rotated by +pi/4 (long axis across the front)",
            Preset::S3 => "tau_s = 1, tau_i = 1/3, rotated by -pi/4 (long axis along the front)",
            Preset::S4 => "S1 with chirp C_s = 10, C_i = 20 (violates slowness)",
        }
    }

    /// Default snapshot positions in units of z0.
    pub fn snapshot_zs(self) -> Vec<f64> {
        match self {
            Preset::S3 => vec![-3.5, -0.5, 0.0, 0.5, 3.5],
            _ => vec![-3.5, -1.5, 0.0, 1.5, 3.5],
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(Preset::S1),
            "S2" => Ok(Preset::S2),
            "S3" => Ok(Preset::S3),
            "S4" => Ok(Preset::S4),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

pub fn build_preset(p: Preset, eta: &Axis, nu: &Axis) -> Result<ComplexGrid2D> {
    p.spec().build(eta, nu)
}
