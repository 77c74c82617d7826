//! Sampled amplitudes and the quadrature used throughout.
//!
//! The signal-idler amplitude is stored on a fixed comoving grid
//! `η = t_s - z β1s`, `ν = t_i - z β1i`; the ancilla amplitude on a `t_a`
//! grid in the ancilla frame. All integrals use the trapezoidal rule with
//! endpoint-halved uniform weights.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform axis `start + i·spacing`, `i = 0..count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub spacing: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(start: f64, spacing: f64, count: usize) -> Result<Self> {
        if !start.is_finite() {
            return Err(Error::param("axis.start", "must be finite"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::param("axis.spacing", format!("must be > 0, got {spacing}")));
        }
        if count == 0 {
            return Err(Error::param("axis.count", "must be >= 1"));
        }
        Ok(Self {
            start,
            spacing,
            count,
        })
    }

    /// `count` points spanning `[-half_extent, half_extent]`.
    pub fn symmetric(half_extent: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::param("axis.count", "symmetric axis needs >= 2 points"));
        }
        Self::new(
            -half_extent,
            2.0 * half_extent / (count - 1) as f64,
            count,
        )
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.spacing
    }

    pub fn end(&self) -> f64 {
        self.coord(self.count - 1)
    }

    /// Trapezoidal weight of sample `i`. A single-point axis carries the
    /// full cell width.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if self.count > 1 && (i == 0 || i + 1 == self.count) {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.weight(i)).collect()
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.coord(i))
    }

    /// Index of the sample nearest to `x`, clamped to the axis.
    pub fn nearest(&self, x: f64) -> usize {
        let f = ((x - self.start) / self.spacing).round();
        f.clamp(0.0, (self.count - 1) as f64) as usize
    }

    /// Half-open index range of samples with coordinates in `[lo, hi]`.
    pub fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let eps = 1e-9;
        let first = ((lo - self.start) / self.spacing - eps).ceil();
        let last = ((hi - self.start) / self.spacing + eps).floor();
        let first = first.max(0.0);
        let last = last.min((self.count - 1) as f64);
        if last < first {
            return 0..0;
        }
        first as usize..last as usize + 1
    }

    pub fn same_as(&self, other: &Axis) -> bool {
        let tol = 1e-12 * self.spacing.abs().max(1.0);
        self.count == other.count
            && (self.start - other.start).abs() <= tol
            && (self.spacing - other.spacing).abs() <= tol
    }

    /// Axis with the same extent and `factor` times finer spacing.
    pub fn refined(&self, factor: usize) -> Axis {
        Axis {
            start: self.start,
            spacing: self.spacing / factor as f64,
            count: (self.count - 1) * factor + 1,
        }
    }
}

/// Complex amplitude on an `(η, ν)` grid, row-major with `η` as the slow index.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid2D {
    eta: Axis,
    nu: Axis,
    values: Vec<Complex64>,
}

impl ComplexGrid2D {
    pub fn new(eta: Axis, nu: Axis, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != eta.count * nu.count {
            return Err(Error::AxisMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                eta.count,
                nu.count
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::param("values", "non-finite amplitude"));
        }
        Ok(Self { eta, nu, values })
    }

    pub fn zeros(eta: Axis, nu: Axis) -> Self {
        Self {
            eta,
            nu,
            values: vec![Complex64::new(0.0, 0.0); eta.count * nu.count],
        }
    }

    pub fn from_fn(eta: Axis, nu: Axis, mut f: impl FnMut(f64, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(eta.count * nu.count);
        for j in 0..eta.count {
            let e = eta.coord(j);
            for k in 0..nu.count {
                values.push(f(e, nu.coord(k)));
            }
        }
        Self { eta, nu, values }
    }

    pub fn eta_axis(&self) -> &Axis {
        &self.eta
    }

    pub fn nu_axis(&self) -> &Axis {
        &self.nu
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.values[j * self.nu.count + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: Complex64) {
        self.values[j * self.nu.count + k] = v;
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        let n = self.nu.count;
        &self.values[j * n..(j + 1) * n]
    }

    #[inline]
    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.eta.weight(j) * self.nu.weight(k)
    }

    pub fn same_axes(&self, other: &ComplexGrid2D) -> bool {
        self.eta.same_as(&other.eta) && self.nu.same_as(&other.nu)
    }

    /// `∬ |Ψ|^2 dη dν`.
    pub fn norm2(&self) -> f64 {
        let wn = self.nu.weights();
        (0..self.eta.count)
            .map(|j| {
                let row: f64 = self
                    .row(j)
                    .iter()
                    .zip(&wn)
                    .map(|(v, w)| v.norm_sqr() * w)
                    .sum();
                row * self.eta.weight(j)
            })
            .sum()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `a·self + b·other` on identical axes.
    pub fn combine(&self, a: Complex64, other: &ComplexGrid2D, b: Complex64) -> Result<Self> {
        if !self.same_axes(other) {
            return Err(Error::AxisMismatch("combine".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            eta: self.eta,
            nu: self.nu,
            values,
        })
    }

    /// Copy scaled to unit L² norm.
    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm2();
        if !(n2 > 0.0) {
            return Err(Error::ZeroNorm("cannot normalize an all-zero grid"));
        }
        Ok(self.scaled(Complex64::new(1.0 / n2.sqrt(), 0.0)))
    }

    pub fn peak_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest intensity on the outer frame of the grid relative to the peak intensity.
    pub fn boundary_intensity_ratio(&self) -> f64 {
        let peak = self.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let (ne, nn) = (self.eta.count, self.nu.count);
        let mut edge = 0.0f64;
        for k in 0..nn {
            edge = edge.max(self.get(0, k).norm_sqr());
            edge = edge.max(self.get(ne - 1, k).norm_sqr());
        }
        for j in 0..ne {
            edge = edge.max(self.get(j, 0).norm_sqr());
            edge = edge.max(self.get(j, nn - 1).norm_sqr());
        }
        edge / peak
    }
}

/// Complex amplitude on a `t_a` axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid1D {
    axis: Axis,
    values: Vec<Complex64>,
}

impl ComplexGrid1D {
    pub fn new(axis: Axis, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != axis.count {
            return Err(Error::AxisMismatch(format!(
                "{} values for an axis of {} points",
                values.len(),
                axis.count
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::param("values", "non-finite amplitude"));
        }
        Ok(Self { axis, values })
    }

    pub fn zeros(axis: Axis) -> Self {
        Self {
            axis,
            values: vec![Complex64::new(0.0, 0.0); axis.count],
        }
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn norm2(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.norm_sqr() * self.axis.weight(i))
            .sum()
    }
}

/// Two-photon amplitude plus ancilla amplitude at propagation distance `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub z: f64,
    pub psi_si: ComplexGrid2D,
    pub psi_a: ComplexGrid1D,
}

impl SimState {
    /// Input waveshape with the ancilla in vacuum.
    pub fn vacuum_ancilla(z: f64, psi_si: ComplexGrid2D, ta: Axis) -> Self {
        Self {
            z,
            psi_si,
            psi_a: ComplexGrid1D::zeros(ta),
        }
    }
}

/// Squared L² norms `(n_si, n_a)` of the two components.
pub fn l2_norm2(state: &SimState) -> (f64, f64) {
    (state.psi_si.norm2(), state.psi_a.norm2())
}

/// `∬ a · conj(b) dη dν`.
pub fn overlap(a: &ComplexGrid2D, b: &ComplexGrid2D) -> Result<Complex64> {
    if !a.same_axes(b) {
        return Err(Error::AxisMismatch("overlap requires identical axes".into()));
    }
    let wn = a.nu.weights();
    let total = (0..a.eta.count)
        .map(|j| {
            let row: Complex64 = a
                .row(j)
                .iter()
                .zip(b.row(j))
                .zip(&wn)
                .map(|((x, y), w)| x * y.conj() * w)
                .sum();
            row * a.eta.weight(j)
        })
        .sum();
    Ok(total)
}

/// `(η, ν, z) → (t_s, t_i)`.
pub fn comoving_to_lab(eta: f64, nu: f64, z: f64, beta1s: f64, beta1i: f64) -> (f64, f64) {
    (eta + z * beta1s, nu + z * beta1i)
}

/// `(t_s, t_i, z) → (η, ν)`.
pub fn lab_to_comoving(t_s: f64, t_i: f64, z: f64, beta1s: f64, beta1i: f64) -> (f64, f64) {
    (t_s - z * beta1s, t_i - z * beta1i)
}

/// Oscillator coordinate `ξ = β1 (z - t_i/β1i + t_s/β1s)`.
pub fn xi_coordinate(t_s: f64, t_i: f64, z: f64, beta1: f64, beta1s: f64, beta1i: f64) -> Result<f64> {
    if beta1s == 0.0 || beta1i == 0.0 {
        return Err(Error::param("beta1", "β1s and β1i must be nonzero"));
    }
    Ok(beta1 * (z - t_i / beta1i + t_s / beta1s))
}

/// Offset from the center of the coupling factor `K`. Integrating the
/// response over `t_a` leaves `exp(-(t_s - t_i)^2 / 4σ^2)`, so `t_s - t_i`
/// is the argument `ξ - ξ₀` of the peak-normalized `K`.
pub fn front_offset(t_s: f64, t_i: f64) -> f64 {
    t_s - t_i
}
