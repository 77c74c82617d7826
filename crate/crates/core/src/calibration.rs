//! Calibration of the coupling γ: WKB seed, oscillator-model optimum, and
//! a refinement against full simulations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid2D;
use crate::optimize::golden_section_max;
use crate::oracle::{calibrate_gamma_oscillator, effective_rabi_rate, wkb_seed};
use crate::propagator::{run, SimConfig, MAX_PHASE_STEP};

/// Full-simulation refinement of γ on `F(L/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FullCalibration {
    pub gamma: f64,
    pub fidelity: f64,
    /// Coarse samples `(γ, F)` preceding the golden-section search.
    pub scan: Vec<(f64, f64)>,
    /// Simulations run in total.
    pub evaluations: usize,
    /// Best coarse sample was an end point of the interval.
    pub at_boundary: bool,
}

/// The three calibration stages.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaTriple {
    pub wkb: f64,
    pub oscillator: f64,
    pub oscillator_residual: f64,
    pub full: FullCalibration,
}

/// Final fidelity of `input` propagated with coupling `gamma`.
pub fn final_fidelity(input: &ComplexGrid2D, cfg: &SimConfig, gamma: f64) -> Result<f64> {
    let c = SimConfig { gamma, snapshot_zs: Vec::new(), ..cfg.clone() };
    Ok(run(input, &c)?.final_fidelity())
}

/// Maximizes `F(L/2)` over γ in `[lo, hi]`: `scan_points` samples in
/// parallel, then golden section around the best one to width `tol`.
pub fn refine_gamma_full(
    input: &ComplexGrid2D,
    cfg: &SimConfig,
    lo: f64,
    hi: f64,
    scan_points: usize,
    tol: f64,
) -> Result<FullCalibration> {
    if scan_points < 3 || !(lo > 0.0 && lo < hi) {
        return Err(Error::NoBracket(format!(
            "need scan_points >= 3 and 0 < lo < hi, got {scan_points}, [{lo}, {hi}]"
        )));
    }
    let h = (hi - lo) / (scan_points - 1) as f64;
    let gammas: Vec<f64> = (0..scan_points).map(|k| lo + k as f64 * h).collect();
    let values = gammas
        .par_iter()
        .map(|&g| final_fidelity(input, cfg, g))
        .collect::<Result<Vec<_>>>()?;
    let best = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("non-empty scan");
    let at_boundary = best == 0 || best == scan_points - 1;
    let a = gammas[best.saturating_sub(1)];
    let b = gammas[(best + 1).min(scan_points - 1)];
    let o = golden_section_max(|g| final_fidelity(input, cfg, g), a, b, tol)?;
    let (gamma, fidelity) = if o.value >= values[best] {
        (o.x, o.value)
    } else {
        (gammas[best], values[best])
    };
    Ok(FullCalibration {
        gamma,
        fidelity,
        scan: gammas.into_iter().zip(values).collect(),
        evaluations: scan_points + o.evaluations,
        at_boundary,
    })
}

/// Largest γ the step size `cfg.dz` resolves.
pub fn max_stable_gamma(cfg: &SimConfig) -> f64 {
    MAX_PHASE_STEP / (cfg.dz * effective_rabi_rate(1.0, cfg.kernel.sigma()))
}

/// Runs all three stages; the full refinement searches `[γ*, 4γ*]`,
/// capped at [`max_stable_gamma`].
pub fn calibrate(input: &ComplexGrid2D, cfg: &SimConfig, scan_points: usize, tol: f64) -> Result<GammaTriple> {
    let sigma = cfg.kernel.sigma();
    let osc = calibrate_gamma_oscillator(sigma)?;
    let hi = (4.0 * osc.gamma).min(max_stable_gamma(cfg) * (1.0 - 1e-9));
    let full = refine_gamma_full(input, cfg, osc.gamma, hi, scan_points, tol)?;
    Ok(GammaTriple {
        wkb: wkb_seed(sigma),
        oscillator: osc.gamma,
        oscillator_residual: osc.residual,
        full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::kernel::GaussianKernel;
    use crate::waveshapes::Preset;

    fn coarse() -> (ComplexGrid2D, SimConfig) {
        let ax = Axis::symmetric(10.0, 201).unwrap();
        let cfg = SimConfig {
            kernel: GaussianKernel::with_sigma(0.2).unwrap(),
            dz: 0.01,
            eta: ax,
            nu: ax,
            ta: ax,
            ..SimConfig::for_preset(Preset::S1)
        };
        (Preset::S1.spec().build(&ax, &ax).unwrap(), cfg)
    }

    #[test]
    fn refinement_beats_scan_neighbours() {
        let (input, cfg) = coarse();
        let c = refine_gamma_full(&input, &cfg, 2.0, 8.0, 5, 0.05).unwrap();
        assert!(c.scan.iter().all(|&(_, f)| f <= c.fidelity + 1e-12));
        assert!(c.fidelity > 0.9, "{c:?}");
        assert_eq!(c.scan.len(), 5);
    }

    #[test]
    fn stable_gamma_limit_passes_validation() {
        let (_, cfg) = coarse();
        let g = max_stable_gamma(&cfg);
        assert!(SimConfig { gamma: g * (1.0 - 1e-9), ..cfg.clone() }.validate().is_ok());
        assert!(SimConfig { gamma: g * 1.01, ..cfg }.validate().is_err());
    }

    #[test]
    fn shipped_oscillator_gamma_is_current() {
        use crate::propagator::{DEFAULT_GAMMA_OSCILLATOR, DEFAULT_SIGMA};
        let c = calibrate_gamma_oscillator(DEFAULT_SIGMA).unwrap();
        assert!((c.gamma - DEFAULT_GAMMA_OSCILLATOR).abs() < 1e-5, "{}", c.gamma);
    }

    #[test]
    fn rejects_bad_interval() {
        let (input, cfg) = coarse();
        assert!(refine_gamma_full(&input, &cfg, 3.0, 2.0, 5, 0.1).is_err());
        assert!(refine_gamma_full(&input, &cfg, 1.0, 2.0, 2, 0.1).is_err());
    }
}
