//! Mixed inputs as weighted sets of independently evolving partial
//! waveshapes.
//!
//! Branches are orthogonal environment configurations of a purification, so
//! they never interfere: each one is propagated on its own and only scalar
//! diagnostics are combined. All combinations are summed in a canonical
//! (sorted) order, which makes every output independent of branch order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexGrid2D};
use crate::observables::{gamma22, CoherenceMap, CoherenceWindow};
use crate::propagator::{run, RunRecord, SimConfig};
use crate::waveshapes::{Preset, WaveshapeSpec};

/// Source of one branch amplitude.
#[derive(Clone, Debug, PartialEq)]
pub enum BranchShape {
    Preset(Preset),
    Spec(WaveshapeSpec),
    Grid(ComplexGrid2D),
}

impl BranchShape {
    /// Normalized amplitude on the given axes.
    pub fn build(&self, eta: &Axis, nu: &Axis) -> Result<ComplexGrid2D> {
        match self {
            BranchShape::Preset(p) => p.spec().build(eta, nu),
            BranchShape::Spec(s) => s.build(eta, nu),
            BranchShape::Grid(g) => {
                if !g.eta_axis().same_as(eta) || !g.nu_axis().same_as(nu) {
                    return Err(Error::AxisMismatch("branch grid axes differ from the run".into()));
                }
                g.normalized()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub shape: BranchShape,
}

/// Weighted branches; weights lie in `(0, 1]` and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    branches: Vec<Branch>,
}

/// Tolerance on `Σ p_w = 1`.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

impl EnsembleSpec {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::param("branches", "at least one branch is required"));
        }
        for b in &branches {
            if !(b.weight > 0.0 && b.weight <= 1.0) {
                return Err(Error::param("weight", format!("must lie in (0, 1], got {}", b.weight)));
            }
        }
        let total = canonical_sum(branches.iter().map(|b| b.weight));
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::param("weight", format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.weight).collect()
    }
}

/// Order-independent sum: terms are added in ascending order.
pub fn canonical_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = terms.into_iter().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.into_iter().sum()
}

/// `Σ_w p_w F_w`.
pub fn mixed_fidelity(weights: &[f64], fidelities: &[f64]) -> Result<f64> {
    if weights.len() != fidelities.len() {
        return Err(Error::param("fidelities", "one fidelity per weight is required"));
    }
    Ok(canonical_sum(weights.iter().zip(fidelities).map(|(p, f)| p * f)))
}

/// Per-branch runs plus the aggregated trace.
#[derive(Clone, Debug)]
pub struct EnsembleRecord {
    pub weights: Vec<f64>,
    pub branches: Vec<RunRecord>,
    pub z_trace: Vec<f64>,
    pub mixed_fidelity_trace: Vec<f64>,
    /// `min_w F_w(L/2)`.
    pub min_final_fidelity: f64,
}

impl EnsembleRecord {
    pub fn final_mixed_fidelity(&self) -> f64 {
        *self.mixed_fidelity_trace.last().expect("non-empty trace")
    }
}

/// Propagates every branch with the same configuration (in parallel) and
/// aggregates `F_mix(z) = Σ p_w F_w(z)`.
pub fn run_ensemble(spec: &EnsembleSpec, cfg: &SimConfig) -> Result<EnsembleRecord> {
    let grids = spec
        .branches
        .iter()
        .map(|b| b.shape.build(&cfg.eta, &cfg.nu))
        .collect::<Result<Vec<_>>>()?;
    let branches = grids
        .par_iter()
        .map(|g| run(g, cfg))
        .collect::<Result<Vec<_>>>()?;
    aggregate(spec.weights(), branches)
}

/// Combines finished branch runs.
pub fn aggregate(weights: Vec<f64>, branches: Vec<RunRecord>) -> Result<EnsembleRecord> {
    let first = branches.first().ok_or_else(|| Error::param("branches", "empty"))?;
    if weights.len() != branches.len() {
        return Err(Error::param("weights", "one weight per branch is required"));
    }
    let n = first.z_trace.len();
    if branches.iter().any(|b| b.z_trace.len() != n) {
        return Err(Error::AxisMismatch("branch traces differ in length".into()));
    }
    let mixed = (0..n)
        .map(|i| {
            let f: Vec<f64> = branches.iter().map(|b| b.fidelity_trace[i]).collect();
            mixed_fidelity(&weights, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    let min_final = branches
        .iter()
        .map(|b| b.final_fidelity())
        .fold(f64::INFINITY, f64::min);
    Ok(EnsembleRecord {
        z_trace: first.z_trace.clone(),
        weights,
        mixed_fidelity_trace: mixed,
        min_final_fidelity: min_final,
        branches,
    })
}

/// `Σ_w p_w Γ_w` for branch amplitudes on identical axes.
pub fn ensemble_gamma22(weights: &[f64], grids: &[ComplexGrid2D], window: CoherenceWindow) -> Result<CoherenceMap> {
    if weights.len() != grids.len() || grids.is_empty() {
        return Err(Error::param("grids", "one grid per weight is required"));
    }
    let g0 = &grids[0];
    if grids.iter().any(|g| !g.same_axes(g0)) {
        return Err(Error::AxisMismatch("ensemble branches on different axes".into()));
    }
    let maps = grids
        .iter()
        .map(|g| gamma22(&g.normalized()?, window))
        .collect::<Result<Vec<_>>>()?;
    let mut out = maps[0].clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        let re = canonical_sum(maps.iter().zip(weights).map(|(m, p)| p * m.values[i].re));
        let im = canonical_sum(maps.iter().zip(weights).map(|(m, p)| p * m.values[i].im));
        *v = num_complex::Complex64::new(re, im);
    }
    Ok(out)
}

/// Serializable branch description used by configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveshape: Option<WaveshapeSpec>,
}

impl BranchConfig {
    pub fn to_branch(&self) -> Result<Branch> {
        let shape = match (&self.preset, &self.waveshape) {
            (Some(p), None) => BranchShape::Preset(*p),
            (None, Some(s)) => BranchShape::Spec(*s),
            _ => {
                return Err(Error::Config(
                    "each ensemble branch needs exactly one of \"preset\" or \"waveshape\"".into(),
                ))
            }
        };
        Ok(Branch {
            weight: self.weight,
            shape,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::coherence_time_t4;

    #[test]
    fn weights_validated() {
        let b = |w| Branch {
            weight: w,
            shape: BranchShape::Preset(Preset::S1),
        };
        assert!(EnsembleSpec::new(vec![b(0.5), b(0.5)]).is_ok());
        assert!(EnsembleSpec::new(vec![b(0.5), b(0.4)]).is_err());
        assert!(EnsembleSpec::new(vec![b(1.5), b(-0.5)]).is_err());
        assert!(EnsembleSpec::new(vec![]).is_err());
    }

    #[test]
    fn mixed_fidelity_is_weighted_mean() {
        assert_eq!(mixed_fidelity(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        let w = [0.1, 0.2, 0.3, 0.4];
        let f = [0.91, 0.5, 0.77, 0.03];
        let a = mixed_fidelity(&w, &f).unwrap();
        let b = mixed_fidelity(&[0.4, 0.1, 0.3, 0.2], &[0.03, 0.91, 0.77, 0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_coherence() {
        let ax = Axis::symmetric(10.0, 401).unwrap();
        let a = Preset::S1.spec().build(&ax, &ax).unwrap();
        let far = WaveshapeSpec {
            t_i0: 3.0,
            t_s0: -2.0,
            tau_i: 0.6,
            ..Default::default()
        }
        .build(&ax, &ax)
        .unwrap();
        let w = CoherenceWindow::wide(0.05, 2.5);
        let single = ensemble_gamma22(&[1.0], &[a.clone()], w).unwrap();
        let direct = gamma22(&a, w).unwrap();
        for (x, y) in single.values.iter().zip(&direct.values) {
            assert!((x - y).norm() < 1e-14);
        }
        let mix = ensemble_gamma22(&[0.5, 0.5], &[a.clone(), far.clone()], w).unwrap();
        assert!((mix.at_origin().re - 1.0).abs() < 1e-9);
        let swapped = ensemble_gamma22(&[0.5, 0.5], &[far.clone(), a.clone()], w).unwrap();
        assert_eq!(mix, swapped);
        let t_mix = coherence_time_t4(&mix).unwrap();
        let t_a = coherence_time_t4(&gamma22(&a, w).unwrap()).unwrap();
        let t_far = coherence_time_t4(&gamma22(&far, w).unwrap()).unwrap();
        assert!(t_mix <= t_a.max(t_far) + 1e-12);
    }

    #[test]
    fn branch_config_requires_one_shape() {
        let c: BranchConfig = serde_json::from_str(r#"{"weight": 1, "preset": "S1"}"#).unwrap();
        assert!(c.to_branch().is_ok());
        let c: BranchConfig = serde_json::from_str(r#"{"weight": 1}"#).unwrap();
        assert!(matches!(c.to_branch(), Err(Error::Config(_))));
    }
}
