//! Integration of the coupled signal-idler / ancilla amplitude equations.
//!
//! In the comoving coordinates `η = t_s - zβ1s`, `ν = t_i - zβ1i` the
//! advection terms vanish and the system reduces to
//!
//! ```text
//! ∂z Ψsi(η,ν) = -iγ ∫ g(η + zβ1s - t_a) g(ν + zβ1i - t_a) Ψa(t_a) dt_a
//! ∂z Ψa(t_a)  = -iγ ∬ g(η + zβ1s - t_a) g(ν + zβ1i - t_a) Ψsi(η,ν) dη dν
//! ```
//!
//! The two discrete operators use identical kernel samples and quadrature
//! weights and are therefore adjoint, so the discrete system conserves
//! `n_si + n_a` up to the RK4 truncation error. Steps are classical RK4 with
//! a fixed `dz`.

mod band;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexGrid1D, ComplexGrid2D, SimState};
use crate::kernel::{GaussianKernel, SeparableKernel};
use crate::oracle::effective_rabi_rate;
use crate::waveshapes::Preset;

use band::{Band, StageTaps};

/// Coupling strength maximizing `F(L/2)` for S1 at the default resolution
/// (γ**, full-simulation golden-section search, F = 0.999979). Reproduce
/// with `cpcgate calibrate`.
pub const DEFAULT_GAMMA: f64 = 10.03;
/// Oscillator-model flip coupling γ* for the default σ; the starting point
/// of the full-simulation search.
pub const DEFAULT_GAMMA_OSCILLATOR: f64 = 3.663335;
pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_LENGTH: f64 = 7.0;
pub const DEFAULT_DZ: f64 = 0.004;
pub const DEFAULT_HALF_EXTENT: f64 = 10.0;
pub const DEFAULT_POINTS: usize = 801;
pub const DEFAULT_CONSERVATION_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-8;
/// Upper bound on `dz · γ_eff`.
pub const MAX_PHASE_STEP: f64 = 0.1;

/// Physical and numerical parameters of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kernel: GaussianKernel,
    pub gamma: f64,
    pub beta1s: f64,
    pub beta1i: f64,
    /// Total propagation length; the run covers `[-L/2, L/2]`.
    pub length: f64,
    pub dz: f64,
    pub eta: Axis,
    pub nu: Axis,
    pub ta: Axis,
    pub snapshot_zs: Vec<f64>,
    /// Fidelity levels at whose first crossing the state is captured.
    pub fidelity_marks: Vec<f64>,
    /// `(η, ν)` points whose amplitude is traced every step.
    pub probes: Vec<(f64, f64)>,
    /// Allowed `|n_si + n_a - n0| / n0`.
    pub conservation_tolerance: f64,
    /// Allowed boundary-to-peak intensity ratio of the input; `None` skips the check.
    pub boundary_tolerance: Option<f64>,
}

impl SimConfig {
    /// Default run for a preset: σ = 0.05, calibrated γ, L = 7, ±10 grids.
    pub fn for_preset(p: Preset) -> Self {
        let ax = Axis::symmetric(DEFAULT_HALF_EXTENT, DEFAULT_POINTS).expect("static axis");
        Self {
            kernel: GaussianKernel::with_sigma(DEFAULT_SIGMA).expect("static kernel"),
            gamma: DEFAULT_GAMMA,
            beta1s: 1.0,
            beta1i: -1.0,
            length: DEFAULT_LENGTH,
            dz: DEFAULT_DZ,
            eta: ax,
            nu: ax,
            ta: ax,
            snapshot_zs: p.snapshot_zs(),
            fidelity_marks: Vec::new(),
            probes: Vec::new(),
            conservation_tolerance: DEFAULT_CONSERVATION_TOLERANCE,
            boundary_tolerance: Some(DEFAULT_BOUNDARY_TOLERANCE),
        }
    }

    pub fn z_start(&self) -> f64 {
        -0.5 * self.length
    }

    pub fn z_end(&self) -> f64 {
        0.5 * self.length
    }

    pub fn steps(&self) -> usize {
        (self.length / self.dz).round() as usize
    }

    /// Position after `n` steps.
    pub fn z_at(&self, n: usize) -> f64 {
        self.z_start() + n as f64 * self.dz
    }

    /// Checks every numerical invariant; errors name the violated one.
    pub fn validate(&self) -> Result<()> {
        let sigma = self.kernel.sigma();
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::param("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.beta1s.is_finite() && self.beta1i.is_finite()) {
            return Err(Error::param("beta1", "must be finite"));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::param("length", format!("must be > 0, got {}", self.length)));
        }
        if !(self.dz.is_finite() && self.dz > 0.0) {
            return Err(Error::invariant("dz > 0", format!("dz = {}", self.dz)));
        }
        let n = self.length / self.dz;
        if (n - n.round()).abs() > 1e-6 || n.round() < 1.0 {
            return Err(Error::invariant(
                "dz divides L",
                format!("L/dz = {n} is not a positive integer"),
            ));
        }
        let bmax = self.beta1s.abs().max(self.beta1i.abs());
        if bmax > 0.0 && self.dz > sigma / (2.0 * bmax) * (1.0 + 1e-12) {
            return Err(Error::invariant(
                "dz <= sigma/(2 max|beta1|)",
                format!("dz = {} exceeds {}", self.dz, sigma / (2.0 * bmax)),
            ));
        }
        let geff = effective_rabi_rate(self.gamma, sigma);
        if self.dz * geff > MAX_PHASE_STEP * (1.0 + 1e-12) {
            return Err(Error::invariant(
                "dz * gamma_eff <= 0.1",
                format!("dz * gamma_eff = {:.4} (gamma_eff = {geff:.4})", self.dz * geff),
            ));
        }
        for (name, ax) in [("eta", &self.eta), ("nu", &self.nu), ("ta", &self.ta)] {
            if ax.spacing > 0.5 * sigma * (1.0 + 1e-9) {
                return Err(Error::invariant(
                    "axis spacing <= sigma/2",
                    format!("{name} spacing {} > {}", ax.spacing, 0.5 * sigma),
                ));
            }
        }
        // The ancilla axis must contain every front midpoint reachable from
        // the signal-idler grid during the run.
        let mid = |e: f64, v: f64, z: f64| 0.5 * (e + v + z * (self.beta1s + self.beta1i));
        let (z0, z1) = (self.z_start(), self.z_end());
        let need_lo = mid(self.eta.start, self.nu.start, z0).min(mid(self.eta.start, self.nu.start, z1));
        let need_hi = mid(self.eta.end(), self.nu.end(), z0).max(mid(self.eta.end(), self.nu.end(), z1));
        let slack = self.ta.spacing;
        if self.ta.start > need_lo + slack || self.ta.end() < need_hi - slack {
            return Err(Error::invariant(
                "ta axis covers the front",
                format!(
                    "ta spans [{}, {}], needs [{need_lo}, {need_hi}]",
                    self.ta.start,
                    self.ta.end()
                ),
            ));
        }
        for &z in &self.snapshot_zs {
            if !(z >= z0 - 0.5 * self.dz && z <= z1 + 0.5 * self.dz) {
                return Err(Error::param("snapshot_zs", format!("{z} outside [{z0}, {z1}]")));
            }
        }
        for &f in &self.fidelity_marks {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::param("fidelity_marks", format!("{f} outside [0, 1]")));
            }
        }
        for &(e, v) in &self.probes {
            if e < self.eta.start || e > self.eta.end() || v < self.nu.start || v > self.nu.end() {
                return Err(Error::param("probes", format!("({e}, {v}) outside the grid")));
            }
        }
        if !(self.conservation_tolerance > 0.0) {
            return Err(Error::param("conservation_tolerance", "must be > 0"));
        }
        Ok(())
    }
}

/// Stored field pair at one position.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub z: f64,
    pub requested: f64,
    pub psi_si: ComplexGrid2D,
    pub psi_a: ComplexGrid1D,
}

/// Step-by-step record of a run. Trace index `n` is the state after `n`
/// steps; index 0 is the input.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub z_trace: Vec<f64>,
    pub fidelity_trace: Vec<f64>,
    pub norm_si_trace: Vec<f64>,
    pub norm_a_trace: Vec<f64>,
    /// Normalized overlap with the input.
    pub overlap_trace: Vec<Complex64>,
    /// Mean of `ν - η` weighted by the squared coupling increment; NaN where
    /// the increment vanishes.
    pub front_trace: Vec<f64>,
    pub front_width_trace: Vec<f64>,
    pub probe_cells: Vec<(usize, usize)>,
    pub probe_traces: Vec<Vec<Complex64>>,
    pub snapshots: Vec<Snapshot>,
    /// `(level, snapshot)` at the first step where `F >= level`.
    pub fidelity_snapshots: Vec<(f64, Snapshot)>,
    pub final_state: SimState,
    pub input_norm2: f64,
    /// Set when the fidelity had to be evaluated on a fully converted state.
    pub zero_norm_flag: bool,
    pub steps: usize,
}

impl RunRecord {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity_trace.last().expect("non-empty trace")
    }

    pub fn final_overlap(&self) -> Complex64 {
        *self.overlap_trace.last().expect("non-empty trace")
    }

    /// Largest `|n_si + n_a - n0| / n0` along the run.
    pub fn max_conservation_drift(&self) -> f64 {
        self.norm_si_trace
            .iter()
            .zip(&self.norm_a_trace)
            .map(|(s, a)| ((s + a) - self.input_norm2).abs() / self.input_norm2)
            .fold(0.0, f64::max)
    }

    /// First `z` at which the fidelity reaches `level`, linearly interpolated.
    pub fn first_crossing(&self, level: f64) -> Option<f64> {
        let f = &self.fidelity_trace;
        (1..f.len()).find(|&n| f[n - 1] < level && f[n] >= level).map(|n| {
            let t = (level - f[n - 1]) / (f[n] - f[n - 1]);
            self.z_trace[n - 1] + t * (self.z_trace[n] - self.z_trace[n - 1])
        })
    }
}

/// Fidelity `½|1 - c|` from a normalized overlap.
#[inline]
pub(crate) fn fidelity_from_overlap(c: Complex64) -> f64 {
    0.5 * (Complex64::new(1.0, 0.0) - c).norm()
}

/// Increment `∂z Ψsi` produced by `psi_a` at position `z`.
pub fn coupling_to_si(psi_a: &ComplexGrid1D, z: f64, cfg: &SimConfig) -> Result<ComplexGrid2D> {
    coupling_to_si_with(psi_a, z, cfg, &cfg.kernel)
}

pub fn coupling_to_si_with(
    psi_a: &ComplexGrid1D,
    z: f64,
    cfg: &SimConfig,
    kernel: &dyn SeparableKernel,
) -> Result<ComplexGrid2D> {
    if !psi_a.axis().same_as(&cfg.ta) {
        return Err(Error::AxisMismatch("psi_a axis differs from cfg.ta".into()));
    }
    let taps = StageTaps::build(z, &cfg.eta, &cfg.nu, &cfg.ta, cfg.beta1s, cfg.beta1i, kernel);
    let band = Band::full(cfg.eta.count, cfg.nu.count);
    let a_w: Vec<Complex64> = psi_a
        .values()
        .iter()
        .enumerate()
        .map(|(l, a)| a * cfg.ta.weight(l))
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); band.len];
    band::to_si(&taps, &band, &a_w, Complex64::new(0.0, -cfg.gamma), &mut out);
    ComplexGrid2D::new(cfg.eta, cfg.nu, out)
}

/// Increment `∂z Ψa` produced by `psi_si` at position `z`.
pub fn coupling_to_a(psi_si: &ComplexGrid2D, z: f64, cfg: &SimConfig) -> Result<ComplexGrid1D> {
    coupling_to_a_with(psi_si, z, cfg, &cfg.kernel)
}

pub fn coupling_to_a_with(
    psi_si: &ComplexGrid2D,
    z: f64,
    cfg: &SimConfig,
    kernel: &dyn SeparableKernel,
) -> Result<ComplexGrid1D> {
    if !psi_si.eta_axis().same_as(&cfg.eta) || !psi_si.nu_axis().same_as(&cfg.nu) {
        return Err(Error::AxisMismatch("psi_si axes differ from cfg".into()));
    }
    let taps = StageTaps::build(z, &cfg.eta, &cfg.nu, &cfg.ta, cfg.beta1s, cfg.beta1i, kernel);
    let band = Band::full(cfg.eta.count, cfg.nu.count);
    let psi_w = weighted(psi_si.values(), &band, &cfg.eta, &cfg.nu);
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.ta.count];
    band::to_a(&taps, &band, &psi_w, Complex64::new(0.0, -cfg.gamma), &mut out);
    ComplexGrid1D::new(cfg.ta, out)
}

fn weighted(vals: &[Complex64], band: &Band, eta: &Axis, nu: &Axis) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(band.len);
    let mut idx = 0;
    for j in 0..band.rows() {
        let we = eta.weight(j);
        for k in band.lo[j]..band.hi[j] {
            out.push(vals[idx] * (we * nu.weight(k)));
            idx += 1;
        }
    }
    out
}

/// Reusable RK4 workspace.
struct Stepper<'a> {
    cfg: &'a SimConfig,
    kernel: &'a dyn SeparableKernel,
    cached: Option<StageTaps>,
    band: Band,
    psi0: Vec<Complex64>,
    stage: Vec<Complex64>,
    stage_w: Vec<Complex64>,
    k_si: [Vec<Complex64>; 4],
    k_a: [Vec<Complex64>; 4],
    a_stage: Vec<Complex64>,
    a_w: Vec<Complex64>,
}

/// Per-step by-products needed for the traces.
struct StepInfo {
    /// `Σ_band (|new|² - |old|²) W`
    d_norm_si: f64,
    /// `Σ_band (new - old) conj(reference) W`
    d_overlap: Complex64,
    /// Front mean and width from the first RK stage (the increment at the
    /// start of the step).
    front: (f64, f64),
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a SimConfig, kernel: &'a dyn SeparableKernel) -> Self {
        Self {
            cfg,
            kernel,
            cached: None,
            band: Band::default(),
            psi0: Vec::new(),
            stage: Vec::new(),
            stage_w: Vec::new(),
            k_si: Default::default(),
            k_a: Default::default(),
            a_stage: Vec::new(),
            a_w: Vec::new(),
        }
    }

    fn taps(&mut self, z: f64) -> StageTaps {
        match self.cached.take() {
            Some(t) if t.z == z => t,
            _ => StageTaps::build(
                z,
                &self.cfg.eta,
                &self.cfg.nu,
                &self.cfg.ta,
                self.cfg.beta1s,
                self.cfg.beta1i,
                self.kernel,
            ),
        }
    }

    fn rhs(
        &mut self,
        taps: &StageTaps,
        slot: usize,
        psi: &[Complex64],
        a: &[Complex64],
    ) {
        let cfg = self.cfg;
        let scale = Complex64::new(0.0, -cfg.gamma);
        self.a_w.clear();
        self.a_w
            .extend(a.iter().enumerate().map(|(l, v)| v * cfg.ta.weight(l)));
        self.stage_w = weighted(psi, &self.band, &cfg.eta, &cfg.nu);
        let mut ks = std::mem::take(&mut self.k_si[slot]);
        ks.resize(self.band.len, Complex64::new(0.0, 0.0));
        band::to_si(taps, &self.band, &self.a_w, scale, &mut ks);
        self.k_si[slot] = ks;
        let mut ka = std::mem::take(&mut self.k_a[slot]);
        ka.resize(cfg.ta.count, Complex64::new(0.0, 0.0));
        band::to_a(taps, &self.band, &self.stage_w, scale, &mut ka);
        self.k_a[slot] = ka;
    }

    /// Advances `psi`, `a` from `z` to `z + dz` in place.
    fn step(
        &mut self,
        z: f64,
        dz: f64,
        psi: &mut ComplexGrid2D,
        a: &mut [Complex64],
        reference: Option<&ComplexGrid2D>,
    ) -> StepInfo {
        let cfg = self.cfg;
        let t0 = self.taps(z);
        let th = StageTaps::build(z + 0.5 * dz, &cfg.eta, &cfg.nu, &cfg.ta, cfg.beta1s, cfg.beta1i, self.kernel);
        let t1 = StageTaps::build(z + dz, &cfg.eta, &cfg.nu, &cfg.ta, cfg.beta1s, cfg.beta1i, self.kernel);
        self.band = Band::covering(cfg.eta.count, cfg.nu.count, &[&t0, &th, &t1]);
        let n_nu = cfg.nu.count;
        let mut psi0 = std::mem::take(&mut self.psi0);
        self.band.gather(psi.values(), n_nu, &mut psi0);
        let a0: Vec<Complex64> = a.to_vec();

        // k1
        self.rhs(&t0, 0, &psi0, &a0);
        let front = self.front_of(0);
        // k2, k3, k4
        for (slot, (taps, c)) in [(&th, 0.5 * dz), (&th, 0.5 * dz), (&t1, dz)].into_iter().enumerate() {
            let prev = slot;
            let mut stage = std::mem::take(&mut self.stage);
            stage.clear();
            stage.extend(psi0.iter().zip(&self.k_si[prev]).map(|(p, k)| p + k * c));
            let mut a_stage = std::mem::take(&mut self.a_stage);
            a_stage.clear();
            a_stage.extend(a0.iter().zip(&self.k_a[prev]).map(|(p, k)| p + k * c));
            self.rhs(taps, slot + 1, &stage, &a_stage);
            self.stage = stage;
            self.a_stage = a_stage;
        }

        let w6 = dz / 6.0;
        let mut d_norm = 0.0;
        let mut d_ov = Complex64::new(0.0, 0.0);
        let vals = psi.values_mut();
        let mut idx = 0;
        for j in 0..self.band.rows() {
            let we = cfg.eta.weight(j);
            for k in self.band.lo[j]..self.band.hi[j] {
                let inc = (self.k_si[0][idx] + (self.k_si[1][idx] + self.k_si[2][idx]) * 2.0 + self.k_si[3][idx]) * w6;
                let old = psi0[idx];
                let new = old + inc;
                let w = we * cfg.nu.weight(k);
                d_norm += (new.norm_sqr() - old.norm_sqr()) * w;
                if let Some(r) = reference {
                    d_ov += inc * r.get(j, k).conj() * w;
                }
                vals[j * n_nu + k] = new;
                idx += 1;
            }
        }
        for (l, v) in a.iter_mut().enumerate() {
            *v = a0[l] + (self.k_a[0][l] + (self.k_a[1][l] + self.k_a[2][l]) * 2.0 + self.k_a[3][l]) * w6;
        }
        self.psi0 = psi0;
        self.cached = Some(t1);
        StepInfo {
            d_norm_si: d_norm,
            d_overlap: d_ov,
            front,
        }
    }

    /// Mean and spread of `ν - η` weighted by `|k|² W` for RK slot `slot`.
    fn front_of(&self, slot: usize) -> (f64, f64) {
        let cfg = self.cfg;
        let (mut m, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut idx = 0;
        for j in 0..self.band.rows() {
            let e = cfg.eta.coord(j);
            let we = cfg.eta.weight(j);
            for k in self.band.lo[j]..self.band.hi[j] {
                let p = self.k_si[slot][idx].norm_sqr() * we * cfg.nu.weight(k);
                let d = cfg.nu.coord(k) - e;
                m += p;
                s1 += p * d;
                s2 += p * d * d;
                idx += 1;
            }
        }
        if m == 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = s1 / m;
        (mean, (s2 / m - mean * mean).max(0.0).sqrt())
    }
}

/// One RK4 step of size `cfg.dz`.
pub fn rk4_step(state: &SimState, cfg: &SimConfig) -> Result<SimState> {
    rk4_step_with(state, cfg, &cfg.kernel)
}

pub fn rk4_step_with(state: &SimState, cfg: &SimConfig, kernel: &dyn SeparableKernel) -> Result<SimState> {
    check_state_axes(state, cfg)?;
    let mut next = state.clone();
    let mut st = Stepper::new(cfg, kernel);
    st.step(state.z, cfg.dz, &mut next.psi_si, next.psi_a.values_mut(), None);
    next.z = state.z + cfg.dz;
    check_finite(&next, 1)?;
    Ok(next)
}

fn check_state_axes(state: &SimState, cfg: &SimConfig) -> Result<()> {
    if !state.psi_si.eta_axis().same_as(&cfg.eta)
        || !state.psi_si.nu_axis().same_as(&cfg.nu)
        || !state.psi_a.axis().same_as(&cfg.ta)
    {
        return Err(Error::AxisMismatch("state axes differ from cfg".into()));
    }
    Ok(())
}

fn check_finite(state: &SimState, step: usize) -> Result<()> {
    let bad = state.psi_a.values().iter().any(|v| !(v.re.is_finite() && v.im.is_finite()))
        || state.psi_si.values().iter().any(|v| !(v.re.is_finite() && v.im.is_finite()));
    if bad {
        return Err(Error::NonFinite { z: state.z, step });
    }
    Ok(())
}

/// Integrates `input` from `-L/2` to `L/2` with a vacuum ancilla.
pub fn run(input: &ComplexGrid2D, cfg: &SimConfig) -> Result<RunRecord> {
    run_with_kernel(input, cfg, &cfg.kernel)
}

/// [`run`] with an alternative separable response.
pub fn run_with_kernel(input: &ComplexGrid2D, cfg: &SimConfig, kernel: &dyn SeparableKernel) -> Result<RunRecord> {
    cfg.validate()?;
    if !input.eta_axis().same_as(&cfg.eta) || !input.nu_axis().same_as(&cfg.nu) {
        return Err(Error::AxisMismatch("input axes differ from cfg".into()));
    }
    let n0 = input.norm2();
    if !(n0 > 0.0) {
        return Err(Error::ZeroNorm("input waveshape is zero"));
    }
    if let Some(tol) = cfg.boundary_tolerance {
        let r = input.boundary_intensity_ratio();
        if r > tol {
            return Err(Error::invariant(
                "field negligible at grid boundary",
                format!("boundary/peak intensity {r:.3e} > {tol:e}"),
            ));
        }
    }

    let steps = cfg.steps();
    let z0 = cfg.z_start();
    let mut state = SimState::vacuum_ancilla(z0, input.clone(), cfg.ta);
    let reference = input.clone();

    let probe_cells: Vec<(usize, usize)> = cfg
        .probes
        .iter()
        .map(|&(e, v)| (cfg.eta.nearest(e), cfg.nu.nearest(v)))
        .collect();
    let snap_steps: Vec<(usize, f64)> = cfg
        .snapshot_zs
        .iter()
        .map(|&z| ((((z - z0) / cfg.dz).round().max(0.0)) as usize).min(steps))
        .zip(cfg.snapshot_zs.iter().copied())
        .collect();

    let mut rec = RunRecord {
        z_trace: Vec::with_capacity(steps + 1),
        fidelity_trace: Vec::with_capacity(steps + 1),
        norm_si_trace: Vec::with_capacity(steps + 1),
        norm_a_trace: Vec::with_capacity(steps + 1),
        overlap_trace: Vec::with_capacity(steps + 1),
        front_trace: Vec::with_capacity(steps + 1),
        front_width_trace: Vec::with_capacity(steps + 1),
        probe_traces: vec![Vec::with_capacity(steps + 1); probe_cells.len()],
        probe_cells,
        snapshots: Vec::new(),
        fidelity_snapshots: Vec::new(),
        final_state: state.clone(),
        input_norm2: n0,
        zero_norm_flag: false,
        steps,
    };
    let mut marks_done = vec![false; cfg.fidelity_marks.len()];

    let mut n_si = n0;
    let mut raw_ov = Complex64::new(n0, 0.0);
    let inv_in = 1.0 / n0.sqrt();
    let mut stepper = Stepper::new(cfg, kernel);

    let mut record_row = |rec: &mut RunRecord, state: &SimState, n: usize, n_si: f64, raw_ov: Complex64| {
        let n_a = state.psi_a.norm2();
        let (c, flag) = if n_si > 0.0 {
            (raw_ov * (inv_in / n_si.sqrt()), false)
        } else {
            (Complex64::new(0.0, 0.0), true)
        };
        rec.zero_norm_flag |= flag;
        let f = fidelity_from_overlap(c);
        rec.z_trace.push(cfg.z_at(n));
        rec.fidelity_trace.push(f);
        rec.norm_si_trace.push(n_si);
        rec.norm_a_trace.push(n_a);
        rec.overlap_trace.push(c);
        for (t, &(j, k)) in rec.probe_traces.iter_mut().zip(&rec.probe_cells) {
            t.push(state.psi_si.get(j, k));
        }
        for &(s, zr) in &snap_steps {
            if s == n {
                rec.snapshots.push(Snapshot {
                    z: cfg.z_at(n),
                    requested: zr,
                    psi_si: state.psi_si.clone(),
                    psi_a: state.psi_a.clone(),
                });
            }
        }
        for (done, &level) in marks_done.iter_mut().zip(&cfg.fidelity_marks) {
            if !*done && f >= level {
                *done = true;
                rec.fidelity_snapshots.push((
                    level,
                    Snapshot {
                        z: cfg.z_at(n),
                        requested: level,
                        psi_si: state.psi_si.clone(),
                        psi_a: state.psi_a.clone(),
                    },
                ));
            }
        }
        n_a
    };

    record_row(&mut rec, &state, 0, n_si, raw_ov);
    for n in 0..steps {
        let z = cfg.z_at(n);
        let info = stepper.step(z, cfg.dz, &mut state.psi_si, state.psi_a.values_mut(), Some(&reference));
        rec.front_trace.push(info.front.0);
        rec.front_width_trace.push(info.front.1);
        state.z = cfg.z_at(n + 1);
        n_si += info.d_norm_si;
        raw_ov += info.d_overlap;
        if !n_si.is_finite() || !(raw_ov.re.is_finite() && raw_ov.im.is_finite()) {
            return Err(Error::NonFinite { z: state.z, step: n + 1 });
        }
        let n_a = record_row(&mut rec, &state, n + 1, n_si, raw_ov);
        let drift = ((n_si + n_a) - n0).abs() / n0;
        if drift > cfg.conservation_tolerance {
            return Err(Error::ConservationBreach {
                z: state.z,
                drift,
                tolerance: cfg.conservation_tolerance,
            });
        }
    }
    // front at the final position
    let tf = StageTaps::build(
        cfg.z_at(steps),
        &cfg.eta,
        &cfg.nu,
        &cfg.ta,
        cfg.beta1s,
        cfg.beta1i,
        kernel,
    );
    stepper.band = Band::covering(cfg.eta.count, cfg.nu.count, &[&tf]);
    let mut psi_b = Vec::new();
    stepper.band.gather(state.psi_si.values(), cfg.nu.count, &mut psi_b);
    let a = state.psi_a.values().to_vec();
    stepper.rhs(&tf, 0, &psi_b, &a);
    let (fm, fw) = stepper.front_of(0);
    rec.front_trace.push(fm);
    rec.front_width_trace.push(fw);

    check_finite(&state, steps)?;
    rec.final_state = state;
    Ok(rec)
}
