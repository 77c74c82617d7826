//! Diagnostics of a signal-idler amplitude: gate fidelity, fourth-order
//! coherence, slowness, front location and quadrant structure.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{overlap, Axis, ComplexGrid2D};
use crate::waveshapes::centroid;

/// `F = ½|1 - ⟨current/‖current‖, input/‖input‖⟩|` together with a flag set
/// when `current` carries no norm (F is then ½).
pub fn fidelity_checked(current: &ComplexGrid2D, input: &ComplexGrid2D) -> Result<(f64, bool)> {
    let ni = input.norm2();
    if !(ni > 0.0) {
        return Err(Error::ZeroNorm("fidelity reference is zero"));
    }
    let nc = current.norm2();
    if nc == 0.0 {
        if !current.same_axes(input) {
            return Err(Error::AxisMismatch("fidelity requires identical axes".into()));
        }
        return Ok((0.5, true));
    }
    let c = overlap(current, input)? / (nc * ni).sqrt();
    Ok((0.5 * (Complex64::new(1.0, 0.0) - c).norm(), false))
}

/// Gate fidelity; 0 for an untouched state, 1 for a perfect sign flip.
pub fn fidelity(current: &ComplexGrid2D, input: &ComplexGrid2D) -> Result<f64> {
    fidelity_checked(current, input).map(|(f, _)| f)
}

/// Sampled `Γ^(2,2)(τ_s, τ_i)`, row-major with `τ_s` as the slow index.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceMap {
    pub tau_s_axis: Axis,
    pub tau_i_axis: Axis,
    pub values: Vec<Complex64>,
}

impl CoherenceMap {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.values[a * self.tau_i_axis.count + b]
    }

    /// Value at the sample nearest to `(0, 0)`.
    pub fn at_origin(&self) -> Complex64 {
        self.get(self.tau_s_axis.nearest(0.0), self.tau_i_axis.nearest(0.0))
    }

    /// Weighted sum of maps on identical axes.
    pub fn weighted_sum(maps: &[(f64, &CoherenceMap)]) -> Result<CoherenceMap> {
        let (_, first) = maps.first().ok_or_else(|| Error::param("maps", "empty"))?;
        let mut values = vec![Complex64::new(0.0, 0.0); first.values.len()];
        for (w, m) in maps {
            if !m.tau_s_axis.same_as(&first.tau_s_axis) || !m.tau_i_axis.same_as(&first.tau_i_axis) {
                return Err(Error::AxisMismatch("coherence maps on different windows".into()));
            }
            for (acc, v) in values.iter_mut().zip(&m.values) {
                *acc += v * *w;
            }
        }
        Ok(CoherenceMap {
            tau_s_axis: first.tau_s_axis,
            tau_i_axis: first.tau_i_axis,
            values,
        })
    }
}

/// Square window of delays `[-half_extent, half_extent]²` at `spacing`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceWindow {
    pub half_extent: f64,
    pub spacing: f64,
}

impl CoherenceWindow {
    /// `±10σ` at `σ/4`.
    pub fn default_for(sigma: f64) -> Self {
        Self {
            half_extent: 10.0 * sigma,
            spacing: 0.25 * sigma,
        }
    }

    /// Window wide enough to see `|Γ|` of a unit-width shape fall below ½.
    pub fn wide(sigma: f64, half_extent: f64) -> Self {
        Self {
            half_extent,
            spacing: 0.25 * sigma,
        }
    }

    fn axis(&self) -> Result<Axis> {
        if !(self.half_extent > 0.0 && self.spacing > 0.0) {
            return Err(Error::param("window", "half_extent and spacing must be > 0"));
        }
        let n = (self.half_extent / self.spacing).round() as usize;
        Axis::new(-(n as f64) * self.spacing, self.spacing, 2 * n + 1)
    }
}

fn smooth_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Integer-shift correlations `C(m_s, m_i) = Σ conj(φ[j-m_s, k-m_i]) φ[j, k]`
/// with `φ = Ψ √W`,
/// for `|m_s| ≤ ms_max`, `|m_i| ≤ mi_max`.
struct ShiftCorrelation {
    ms_max: usize,
    mi_max: usize,
    values: Vec<Complex64>,
}

impl ShiftCorrelation {
    fn compute(psi: &ComplexGrid2D, ms_max: usize, mi_max: usize) -> Self {
        let (ne, nn) = (psi.eta_axis().count, psi.nu_axis().count);
        let pe = smooth_len(ne + ms_max + 1);
        let pn = smooth_len(nn + mi_max + 1);
        let mut planner = FftPlanner::<f64>::new();
        let fe = planner.plan_fft_forward(pe);
        let fn_ = planner.plan_fft_forward(pn);
        let ie = planner.plan_fft_inverse(pe);
        let in_ = planner.plan_fft_inverse(pn);

        let zero = Complex64::new(0.0, 0.0);
        let mut buf = vec![zero; pe * pn];
        // φ = Ψ √W: the zero shift reproduces the trapezoidal norm and the
        // correlation stays exactly Hermitian
        let wn: Vec<f64> = psi.nu_axis().weights().iter().map(|w| w.sqrt()).collect();
        for j in 0..ne {
            let we = psi.eta_axis().weight(j).sqrt();
            for (k, v) in psi.row(j).iter().enumerate() {
                buf[j * pn + k] = v * (we * wn[k]);
            }
        }
        fft2(&mut buf, pe, pn, &*fe, &*fn_);
        for v in buf.iter_mut() {
            *v = Complex64::new(v.norm_sqr(), 0.0);
        }
        fft2(&mut buf, pe, pn, &*ie, &*in_);

        let scale = 1.0 / (pe * pn) as f64;
        let (ws, wi) = (2 * ms_max + 1, 2 * mi_max + 1);
        let mut values = vec![zero; ws * wi];
        for a in 0..ws {
            let ms = a as i64 - ms_max as i64;
            let r = ms.rem_euclid(pe as i64) as usize;
            for b in 0..wi {
                let mi = b as i64 - mi_max as i64;
                let c = mi.rem_euclid(pn as i64) as usize;
                values[a * wi + b] = buf[r * pn + c] * scale;
            }
        }
        Self {
            ms_max,
            mi_max,
            values,
        }
    }

    #[inline]
    fn get(&self, ms: i64, mi: i64) -> Complex64 {
        let a = (ms + self.ms_max as i64) as usize;
        let b = (mi + self.mi_max as i64) as usize;
        self.values[a * (2 * self.mi_max + 1) + b]
    }
}

fn fft2(
    buf: &mut [Complex64],
    rows: usize,
    cols: usize,
    row_fft: &dyn rustfft::Fft<f64>,
    col_fft: &dyn rustfft::Fft<f64>,
) {
    for r in buf.chunks_exact_mut(cols) {
        col_fft.process(r);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = buf[r * cols + c];
        }
        row_fft.process(&mut col);
        for r in 0..rows {
            buf[r * cols + c] = col[r];
        }
    }
}

/// Pure-state fourth-order coherence
/// `Γ(τ_s, τ_i) = ∬ Ψ*(t_s - τ_s, t_i - τ_i) Ψ(t_s, t_i) dt_s dt_i`.
///
/// Integer grid shifts come from one zero-padded FFT correlation; off-grid
/// delays use the bilinear interpolant of `Ψ`, which turns into the same
/// bilinear combination of the neighbouring integer-shift correlations.
pub fn gamma22(psi: &ComplexGrid2D, window: CoherenceWindow) -> Result<CoherenceMap> {
    let ax = window.axis()?;
    let (de, dn) = (psi.eta_axis().spacing, psi.nu_axis().spacing);
    let max_s = (ax.end() / de).ceil() as usize + 1;
    let max_i = (ax.end() / dn).ceil() as usize + 1;
    if max_s >= psi.eta_axis().count || max_i >= psi.nu_axis().count {
        return Err(Error::param("window", "delay window exceeds the grid"));
    }
    let corr = ShiftCorrelation::compute(psi, max_s, max_i);
    let mut values = Vec::with_capacity(ax.count * ax.count);
    for a in 0..ax.count {
        let fs = ax.coord(a) / de;
        let (ms, us) = (fs.floor() as i64, fs - fs.floor());
        for b in 0..ax.count {
            let fi = ax.coord(b) / dn;
            let (mi, ui) = (fi.floor() as i64, fi - fi.floor());
            let v = corr.get(ms, mi) * ((1.0 - us) * (1.0 - ui))
                + corr.get(ms + 1, mi) * (us * (1.0 - ui))
                + corr.get(ms, mi + 1) * ((1.0 - us) * ui)
                + corr.get(ms + 1, mi + 1) * (us * ui);
            values.push(v);
        }
    }
    Ok(CoherenceMap {
        tau_s_axis: ax,
        tau_i_axis: ax,
        values,
    })
}

/// Slowness diagnostics of a waveshape relative to a response time σ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlownessReport {
    /// `1 - min_{|τ_s|,|τ_i| ≤ σ} |Γ(τ)| / Γ(0,0)`.
    pub margin: f64,
    /// `max σ |∇Ψ| / |Ψ|` over cells above 1% of the peak modulus.
    pub gradient: f64,
}

pub fn slowness(psi: &ComplexGrid2D, sigma: f64) -> Result<SlownessReport> {
    let map = gamma22(
        psi,
        CoherenceWindow {
            half_extent: sigma,
            spacing: 0.25 * sigma,
        },
    )?;
    let g0 = map.at_origin().re;
    if !(g0 > 0.0) {
        return Err(Error::ZeroNorm("slowness of a zero state"));
    }
    let min = map.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);

    let (ea, na) = (psi.eta_axis(), psi.nu_axis());
    let peak = psi.peak_abs();
    let mut grad: f64 = 0.0;
    for j in 1..ea.count.saturating_sub(1) {
        for k in 1..na.count.saturating_sub(1) {
            let v = psi.get(j, k);
            if v.norm() <= 0.01 * peak {
                continue;
            }
            let de = (psi.get(j + 1, k) - psi.get(j - 1, k)) / (2.0 * ea.spacing);
            let dn = (psi.get(j, k + 1) - psi.get(j, k - 1)) / (2.0 * na.spacing);
            grad = grad.max(sigma * (de.norm_sqr() + dn.norm_sqr()).sqrt() / v.norm());
        }
    }
    Ok(SlownessReport {
        margin: 1.0 - min / g0,
        gradient: grad,
    })
}

/// `1 - min |Γ|/Γ(0,0)` over delays within σ; small means slow.
pub fn slowness_margin(psi: &ComplexGrid2D, sigma: f64) -> Result<f64> {
    slowness(psi, sigma).map(|r| r.margin)
}

/// Half widths at half maximum of `|Γ|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceWidths {
    /// Along `τ_s = τ_i`; this is `T^(4)`.
    pub diagonal: f64,
    pub anti_diagonal: f64,
    pub tau_s: f64,
    pub tau_i: f64,
    /// True when the diagonal profile did not fall to ½ inside the window;
    /// `diagonal` is then the window bound.
    pub clipped: bool,
}

/// Distance along direction `(ds, di)` (in samples) at which `|Γ|` first
/// drops to half of its origin value; linear interpolation between samples.
fn hwhm(map: &CoherenceMap, ds: i64, di: i64) -> (f64, bool) {
    let (sa, ia) = (&map.tau_s_axis, &map.tau_i_axis);
    let (c_s, c_i) = (sa.nearest(0.0) as i64, ia.nearest(0.0) as i64);
    let g0 = map.get(c_s as usize, c_i as usize).norm();
    let step = if ds != 0 { sa.spacing } else { ia.spacing };
    let mut out = Vec::new();
    let mut clipped = false;
    for sign in [1i64, -1] {
        let mut prev = g0;
        let mut n = 1i64;
        let found = loop {
            let (a, b) = (c_s + sign * n * ds, c_i + sign * n * di);
            if a < 0 || b < 0 || a >= sa.count as i64 || b >= ia.count as i64 {
                break None;
            }
            let v = map.get(a as usize, b as usize).norm();
            if v <= 0.5 * g0 {
                let t = (prev - 0.5 * g0) / (prev - v);
                break Some((n as f64 - 1.0 + t) * step);
            }
            prev = v;
            n += 1;
        };
        match found {
            Some(w) => out.push(w),
            None => {
                clipped = true;
                out.push((n - 1) as f64 * step);
            }
        }
    }
    (0.5 * (out[0] + out[1]), clipped)
}

/// `T^(4)` and companion widths of a coherence map. The diagonal uses
/// coordinate distance `τ` along `τ_s = τ_i = τ`.
pub fn coherence_widths(map: &CoherenceMap) -> Result<CoherenceWidths> {
    if map.at_origin().norm() == 0.0 {
        return Err(Error::ZeroNorm("coherence map vanishes at the origin"));
    }
    let (diagonal, clipped) = if (map.tau_s_axis.spacing - map.tau_i_axis.spacing).abs() < 1e-12 {
        hwhm(map, 1, 1)
    } else {
        return Err(Error::AxisMismatch("diagonal width needs equal delay spacings".into()));
    };
    Ok(CoherenceWidths {
        diagonal,
        anti_diagonal: hwhm(map, 1, -1).0,
        tau_s: hwhm(map, 1, 0).0,
        tau_i: hwhm(map, 0, 1).0,
        clipped,
    })
}

/// `T^(4)`: half width at half maximum of `|Γ|` along the diagonal.
pub fn coherence_time_t4(map: &CoherenceMap) -> Result<f64> {
    coherence_widths(map).map(|w| w.diagonal)
}

/// Mean and standard deviation of `ν - η` weighted by `|increment|² W`.
pub fn front_position(increment: &ComplexGrid2D) -> Result<(f64, f64)> {
    let (ea, na) = (increment.eta_axis(), increment.nu_axis());
    let (mut m, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for j in 0..ea.count {
        for k in 0..na.count {
            let p = increment.get(j, k).norm_sqr() * increment.weight(j, k);
            let d = na.coord(k) - ea.coord(j);
            m += p;
            s1 += p * d;
            s2 += p * d * d;
        }
    }
    if m == 0.0 {
        return Err(Error::ZeroNorm("front of an all-zero increment"));
    }
    let mean = s1 / m;
    Ok((mean, (s2 / m - mean * mean).max(0.0).sqrt()))
}

/// Populations and mean phases of the four quadrants around the centroid.
/// Signs refer to `(η - η̄, ν - ν̄)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quadrants {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
    /// `arg ∬_Q Ψ` for the `(+,+)` and `(-,-)` quadrants.
    pub phase_pp: f64,
    pub phase_mm: f64,
    pub phase_pm: f64,
    pub phase_mp: f64,
}

impl Quadrants {
    pub fn total(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }

    /// Population fraction carried by `(+,+)` and `(-,-)`.
    pub fn diagonal_fraction(&self) -> f64 {
        let t = self.total();
        if t == 0.0 {
            0.0
        } else {
            (self.pp + self.mm) / t
        }
    }

    /// `|phase_pp - phase_mm|` wrapped to `[0, π]`.
    pub fn diagonal_phase_difference(&self) -> f64 {
        wrapped_difference(self.phase_pp, self.phase_mm)
    }
}

fn wrapped_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

pub fn quadrant_populations(psi: &ComplexGrid2D) -> Result<Quadrants> {
    let (ce, cn) = match centroid(psi) {
        Ok(c) => c,
        Err(Error::ZeroNorm(_)) => return Ok(Quadrants::default()),
        Err(e) => return Err(e),
    };
    let (ea, na) = (psi.eta_axis(), psi.nu_axis());
    let (tie_e, tie_n) = (1e-9 * ea.spacing, 1e-9 * na.spacing);
    let mut pop = [0.0f64; 4];
    let mut amp = [Complex64::new(0.0, 0.0); 4];
    for j in 0..ea.count {
        let de = ea.coord(j) - ce;
        for k in 0..na.count {
            let dn = na.coord(k) - cn;
            let v = psi.get(j, k);
            let w = psi.weight(j, k);
            // cells on a split line are shared equally
            let fe: &[(usize, f64)] = if de > tie_e {
                &[(0, 1.0)]
            } else if de < -tie_e {
                &[(1, 1.0)]
            } else {
                &[(0, 0.5), (1, 0.5)]
            };
            let fnu: &[(usize, f64)] = if dn > tie_n {
                &[(0, 1.0)]
            } else if dn < -tie_n {
                &[(1, 1.0)]
            } else {
                &[(0, 0.5), (1, 0.5)]
            };
            for &(a, wa) in fe {
                for &(b, wb) in fnu {
                    let q = 2 * a + b;
                    pop[q] += v.norm_sqr() * w * wa * wb;
                    amp[q] += v * (w * wa * wb);
                }
            }
        }
    }
    Ok(Quadrants {
        pp: pop[0],
        pm: pop[1],
        mp: pop[2],
        mm: pop[3],
        phase_pp: amp[0].arg(),
        phase_pm: amp[1].arg(),
        phase_mp: amp[2].arg(),
        phase_mm: amp[3].arg(),
    })
}

/// Populations and mean phases on the two sides of the line `ν - η = offset`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrontSplit {
    /// `ν - η > offset`: not yet reached by a front moving toward larger `ν - η`.
    pub ahead: f64,
    pub behind: f64,
    pub phase_ahead: f64,
    pub phase_behind: f64,
}

impl FrontSplit {
    pub fn phase_difference(&self) -> f64 {
        wrapped_difference(self.phase_ahead, self.phase_behind)
    }

    pub fn balance(&self) -> f64 {
        let t = self.ahead + self.behind;
        if t == 0.0 {
            0.0
        } else {
            self.ahead.min(self.behind) / t
        }
    }
}

pub fn front_split(psi: &ComplexGrid2D, offset: f64) -> FrontSplit {
    let (ea, na) = (psi.eta_axis(), psi.nu_axis());
    let (mut pa, mut pb) = (0.0, 0.0);
    let (mut aa, mut ab) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for j in 0..ea.count {
        for k in 0..na.count {
            let v = psi.get(j, k);
            let w = psi.weight(j, k);
            if na.coord(k) - ea.coord(j) > offset {
                pa += v.norm_sqr() * w;
                aa += v * w;
            } else {
                pb += v.norm_sqr() * w;
                ab += v * w;
            }
        }
    }
    FrontSplit {
        ahead: pa,
        behind: pb,
        phase_ahead: aa.arg(),
        phase_behind: ab.arg(),
    }
}
