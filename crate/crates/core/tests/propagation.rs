use std::f64::consts::PI;

use cpcgate::propagator::{coupling_to_a, coupling_to_si, rk4_step, DEFAULT_GAMMA};
use cpcgate::{run, Axis, GaussianKernel, Complex64, ComplexGrid1D, ComplexGrid2D, Preset, SimConfig, SimState, WaveshapeSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gauss(t: f64, sigma: f64) -> f64 {
    (-t * t / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt()
}

/// Small grids around a 64-cell ancilla axis.
fn small_config() -> SimConfig {
    small_config_truncated(GaussianKernel::DEFAULT_TRUNCATION)
}

fn small_config_truncated(radius: f64) -> SimConfig {
    let ax = Axis::symmetric(1.0, 81).unwrap();
    SimConfig {
        kernel: GaussianKernel::new(0.05, radius).unwrap(),
        eta: ax,
        nu: ax,
        ta: Axis::new(-0.7875, 0.025, 64).unwrap(),
        ..SimConfig::for_preset(Preset::S1)
    }
}

/// Coarse S1 setup: σ = 0.2 on ±10 at spacing 0.1.
fn coarse_config() -> SimConfig {
    let ax = Axis::symmetric(10.0, 201).unwrap();
    SimConfig {
        kernel: GaussianKernel::with_sigma(0.2).unwrap(),
        gamma: 5.0,
        dz: 0.01,
        eta: ax,
        nu: ax,
        ta: ax,
        snapshot_zs: Vec::new(),
        ..SimConfig::for_preset(Preset::S1)
    }
}

fn relative_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn zero_fields_give_zero_increments() {
    let cfg = small_config();
    let si = coupling_to_si(&ComplexGrid1D::zeros(cfg.ta), 0.1, &cfg).unwrap();
    assert!(si.values().iter().all(|v| *v == c(0.0, 0.0)));
    let a = coupling_to_a(&ComplexGrid2D::zeros(cfg.eta, cfg.nu), 0.1, &cfg).unwrap();
    assert!(a.values().iter().all(|v| *v == c(0.0, 0.0)));
}

/// Relative L2 distance between the truncated and untruncated kernel for a
/// white-noise field: the `g²` tail beyond the cutoff, once per factor.
fn white_noise_truncation_bound(radius: f64) -> f64 {
    // P(|X| > r√2) for a standard normal, bounded by the Gaussian tail estimate
    let x = radius * 2f64.sqrt();
    let tail = (-x * x / 2.0).exp() / (x * (PI / 2.0).sqrt());
    2.0 * tail.sqrt()
}

fn si_brute_force_error(radius: f64) -> f64 {
    let cfg = small_config_truncated(radius);
    let sigma = cfg.kernel.sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vals = (0..64).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let psi_a = ComplexGrid1D::new(cfg.ta, vals).unwrap();
    let z = 0.13;
    let got = coupling_to_si(&psi_a, z, &cfg).unwrap();
    let mut exact = Vec::new();
    for j in 0..cfg.eta.count {
        for k in 0..cfg.nu.count {
            let (ts, ti) = (cfg.eta.coord(j) + z * cfg.beta1s, cfg.nu.coord(k) + z * cfg.beta1i);
            let mut s = c(0.0, 0.0);
            for l in 0..cfg.ta.count {
                let ta = cfg.ta.coord(l);
                s += psi_a.values()[l] * (gauss(ts - ta, sigma) * gauss(ti - ta, sigma) * cfg.ta.weight(l));
            }
            exact.push(s * c(0.0, -cfg.gamma));
        }
    }
    relative_l2(got.values(), &exact)
}

fn a_brute_force_error(radius: f64) -> f64 {
    let cfg = small_config_truncated(radius);
    let sigma = cfg.kernel.sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let psi = ComplexGrid2D::from_fn(cfg.eta, cfg.nu, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let z = -0.07;
    let got = coupling_to_a(&psi, z, &cfg).unwrap();
    let exact: Vec<Complex64> = (0..cfg.ta.count)
        .map(|l| {
            let ta = cfg.ta.coord(l);
            let mut s = c(0.0, 0.0);
            for j in 0..cfg.eta.count {
                for k in 0..cfg.nu.count {
                    let (ts, ti) = (cfg.eta.coord(j) + z * cfg.beta1s, cfg.nu.coord(k) + z * cfg.beta1i);
                    s += psi.get(j, k) * (gauss(ts - ta, sigma) * gauss(ti - ta, sigma) * psi.weight(j, k));
                }
            }
            s * c(0.0, -cfg.gamma)
        })
        .collect();
    relative_l2(got.values(), &exact)
}

#[test]
fn couplings_match_untruncated_brute_force() {
    for err in [si_brute_force_error(6.0), a_brute_force_error(6.0)] {
        assert!(err < 1e-6, "{err}");
    }
}

#[test]
fn default_truncation_error_stays_within_tail_bound() {
    let bound = white_noise_truncation_bound(GaussianKernel::DEFAULT_TRUNCATION);
    for err in [
        si_brute_force_error(GaussianKernel::DEFAULT_TRUNCATION),
        a_brute_force_error(GaussianKernel::DEFAULT_TRUNCATION),
    ] {
        assert!(err < bound, "{err} vs {bound}");
    }
}

#[test]
fn single_ancilla_cell_drives_a_bump_on_one_line() {
    let cfg = small_config();
    let l0 = 40;
    let mut vals = vec![c(0.0, 0.0); cfg.ta.count];
    vals[l0] = c(1.0, 0.0);
    let z = 0.05;
    let inc = coupling_to_si(&ComplexGrid1D::new(cfg.ta, vals).unwrap(), z, &cfg).unwrap();
    let ta = cfg.ta.coord(l0);
    let (mut peak, mut at) = (0.0, (0, 0));
    for j in 0..cfg.eta.count {
        for k in 0..cfg.nu.count {
            let v = inc.get(j, k).norm();
            if v > peak {
                peak = v;
                at = (j, k);
            }
        }
    }
    // maximum where t_s = t_i = t_a*, hence on ν - η = (β1s - β1i) z
    let (e, n) = (cfg.eta.coord(at.0), cfg.nu.coord(at.1));
    assert!((e + z * cfg.beta1s - ta).abs() <= 0.5 * cfg.eta.spacing + 1e-12);
    assert!((n + z * cfg.beta1i - ta).abs() <= 0.5 * cfg.nu.spacing + 1e-12);
    assert!((n - e - (cfg.beta1s - cfg.beta1i) * z).abs() <= cfg.eta.spacing + 1e-12);
}

#[test]
fn single_signal_cell_drives_narrow_gaussian_in_ta() {
    let ax = Axis::symmetric(1.0, 81).unwrap();
    let cfg = SimConfig {
        eta: ax,
        nu: ax,
        ta: Axis::symmetric(1.0, 401).unwrap(),
        ..SimConfig::for_preset(Preset::S1)
    };
    let sigma = cfg.kernel.sigma();
    let (j, k) = (44, 36);
    let mut psi = ComplexGrid2D::zeros(ax, ax);
    psi.set(j, k, c(1.0, 0.0));
    let z = 0.0;
    let inc = coupling_to_a(&psi, z, &cfg).unwrap();
    let centre = 0.5 * (ax.coord(j) + ax.coord(k));
    let w = sigma / 2f64.sqrt();
    let peak = inc.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (l, v) in inc.values().iter().enumerate() {
        let t = cfg.ta.coord(l) - centre;
        let expected = peak * (-t * t / (2.0 * w * w)).exp();
        if t.abs() < 4.0 * w {
            assert!((v.norm() - expected).abs() < 1e-9 * peak, "t = {t}");
        }
    }
}

#[test]
fn zero_coupling_step_only_advances_z() {
    let cfg = SimConfig { gamma: 0.0, ..coarse_config() };
    let psi = Preset::S2.spec().build(&cfg.eta, &cfg.nu).unwrap();
    let s = SimState::vacuum_ancilla(cfg.z_start(), psi.clone(), cfg.ta);
    let next = rk4_step(&s, &cfg).unwrap();
    assert_eq!(next.psi_si, psi);
    assert!((next.z - (s.z + cfg.dz)).abs() < 1e-15);
    let rec = run(&psi, &cfg).unwrap();
    assert!(rec.fidelity_trace.iter().all(|f| *f < 1e-14));
    assert!(rec.norm_a_trace.iter().all(|n| *n == 0.0));
}

#[test]
fn step_halving_shows_fourth_order() {
    // a wide cutoff keeps the tap switch-on jumps below the RK4 error
    let base = SimConfig {
        kernel: GaussianKernel::new(0.2, 8.0).unwrap(),
        ..coarse_config()
    };
    let psi = Preset::S1.spec().build(&base.eta, &base.nu).unwrap();
    let finals: Vec<ComplexGrid2D> = [0.02, 0.01, 0.005, 0.0025]
        .iter()
        .map(|&dz| {
            let cfg = SimConfig { dz, gamma: 2.5, ..base.clone() };
            run(&psi, &cfg).unwrap().final_state.psi_si
        })
        .collect();
    let reference = finals[3].values();
    let e1 = relative_l2(finals[0].values(), reference);
    let e2 = relative_l2(finals[1].values(), reference);
    // Richardson: with a dz/8 reference the ratio is 16 up to O(1/16) contamination
    let ratio = e1 / e2;
    assert!(ratio > 14.0 && ratio < 20.0, "e(dz) = {e1:e}, e(dz/2) = {e2:e}, ratio {ratio}");
}

#[test]
fn delaying_both_photons_with_the_ancilla_window_is_covariant() {
    let cfg = coarse_config();
    let shift = 0.5;
    let shifted_ax = Axis::new(cfg.eta.start + shift, cfg.eta.spacing, cfg.eta.count).unwrap();
    let shifted = SimConfig {
        eta: shifted_ax,
        nu: shifted_ax,
        ta: shifted_ax,
        ..cfg.clone()
    };
    let spec = WaveshapeSpec {
        t_s0: shift,
        t_i0: shift,
        ..WaveshapeSpec::default()
    };
    let a = run(&Preset::S1.spec().build(&cfg.eta, &cfg.nu).unwrap(), &cfg).unwrap();
    let b = run(&spec.build(&shifted.eta, &shifted.nu).unwrap(), &shifted).unwrap();
    let worst = a
        .fidelity_trace
        .iter()
        .zip(&b.fidelity_trace)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn delaying_the_idler_keeps_the_gate() {
    let ax = Axis::symmetric(11.0, 221).unwrap();
    let cfg = SimConfig {
        length: 9.0,
        eta: ax,
        nu: ax,
        ta: ax,
        ..coarse_config()
    };
    let plain = run(&Preset::S1.spec().build(&ax, &ax).unwrap(), &cfg).unwrap();
    let delayed_spec = WaveshapeSpec {
        t_i0: 1.0,
        ..WaveshapeSpec::default()
    };
    let delayed = run(&delayed_spec.build(&ax, &ax).unwrap(), &cfg).unwrap();
    let d = (plain.final_fidelity() - delayed.final_fidelity()).abs();
    assert!(d < 1e-3, "{} vs {}", plain.final_fidelity(), delayed.final_fidelity());
}

#[test]
fn s1_default_run_and_doubled_gamma() {
    let cfg = SimConfig::for_preset(Preset::S1);
    let psi = Preset::S1.spec().build(&cfg.eta, &cfg.nu).unwrap();
    let rec = run(&psi, &cfg).unwrap();
    let f = rec.final_fidelity();
    let n_a = *rec.norm_a_trace.last().unwrap();
    assert!(f >= 0.99 && n_a <= 0.01, "F = {f}, n_a = {n_a}");
    for s in &rec.snapshots {
        assert!((s.z - s.requested).abs() <= 0.5 * cfg.dz + 1e-12);
    }
    assert_eq!(rec.z_trace.len(), rec.fidelity_trace.len());
    assert_eq!(rec.z_trace.len(), rec.front_trace.len());

    // 2γ needs dz/2 to stay within the phase-step limit
    let doubled = SimConfig {
        gamma: 2.0 * DEFAULT_GAMMA,
        dz: 0.5 * cfg.dz,
        ..cfg
    };
    let f2 = run(&psi, &doubled).unwrap().final_fidelity();
    assert!(f2 < f, "F(2 gamma) = {f2}, F(gamma) = {f}");
}
