//! JSON run configuration.
//!
//! Every key is optional; omitted keys take the documented defaults and the
//! fully resolved configuration can be echoed back with
//! [`ResolvedConfig::to_raw`]. Unknown keys are rejected.
//!
//! ```json
//! {
//!   "preset": "S3",
//!   "gamma": 10.0,
//!   "sigma": 0.05,
//!   "L": 7.0,
//!   "dz": 0.004,
//!   "grid": { "half_extent": 10.0, "points": 801 },
//!   "snapshot_zs": [-3.5, -0.5, 0.0, 0.5, 3.5]
//! }
//! ```
//!
//! Instead of `preset` a run may give `waveshape` (the fields of
//! [`WaveshapeSpec`]) or `ensemble` (`{"branches": [{"weight": .., "preset"
//! | "waveshape": ..}]}`). A `sweep` object lists values for `gamma`,
//! `sigma`, `dz`, `L`, `beta1s`, `beta1i` or `preset`; the sweep covers
//! their Cartesian product.

use serde::{Deserialize, Serialize};

use crate::ensemble::{BranchConfig, EnsembleSpec};
use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexGrid2D};
use crate::kernel::GaussianKernel;
use crate::propagator::{
    SimConfig, DEFAULT_BOUNDARY_TOLERANCE, DEFAULT_CONSERVATION_TOLERANCE, DEFAULT_DZ, DEFAULT_GAMMA,
    DEFAULT_HALF_EXTENT, DEFAULT_LENGTH, DEFAULT_POINTS, DEFAULT_SIGMA,
};
use crate::waveshapes::{Preset, WaveshapeSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_extent: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub branches: Vec<BranchConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dz: Option<Vec<f64>>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub length: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1i: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Vec<Preset>>,
}

/// One value of a swept parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepValue {
    Number(f64),
    Preset(Preset),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Preset(p) => write!(f, "{p}"),
        }
    }
}

/// A sweep point: `(key, value)` pairs in schema order.
pub type SweepPoint = Vec<(&'static str, SweepValue)>;

impl SweepConfig {
    /// Cartesian product of the listed values, last key varying fastest.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let mut axes: Vec<(&'static str, Vec<SweepValue>)> = Vec::new();
        let num = |v: &Option<Vec<f64>>| v.as_ref().map(|xs| xs.iter().map(|x| SweepValue::Number(*x)).collect::<Vec<_>>());
        for (key, vals) in [
            ("preset", self.preset.as_ref().map(|p| p.iter().map(|x| SweepValue::Preset(*x)).collect())),
            ("gamma", num(&self.gamma)),
            ("sigma", num(&self.sigma)),
            ("dz", num(&self.dz)),
            ("L", num(&self.length)),
            ("beta1s", num(&self.beta1s)),
            ("beta1i", num(&self.beta1i)),
        ] {
            if let Some(v) = vals {
                if v.is_empty() {
                    return Err(Error::Config(format!("sweep range \"{key}\" is empty")));
                }
                axes.push((key, v));
            }
        }
        if axes.is_empty() {
            return Err(Error::Config("sweep lists no parameters".into()));
        }
        let mut points: Vec<SweepPoint> = vec![Vec::new()];
        for (key, vals) in axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key, v.clone()));
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

/// Configuration file contents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveshape: Option<WaveshapeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1i: Option<f64>,
    #[serde(default, rename = "L", alias = "length", skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta_axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_zs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_marks: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservation_tolerance: Option<f64>,
    /// `null` disables the boundary check.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "nullable"
    )]
    pub boundary_tolerance: Option<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Option<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(inner) => inner.serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<f64>>, D::Error> {
        Ok(Some(Option::<f64>::deserialize(d)?))
    }
}

/// What is propagated.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSpec {
    Preset(Preset),
    Waveshape(WaveshapeSpec),
    Ensemble(Vec<BranchConfig>),
}

impl InputSpec {
    /// Single input amplitude; errors for ensembles.
    pub fn build(&self, eta: &Axis, nu: &Axis) -> Result<ComplexGrid2D> {
        match self {
            InputSpec::Preset(p) => p.spec().build(eta, nu),
            InputSpec::Waveshape(w) => w.build(eta, nu),
            InputSpec::Ensemble(_) => Err(Error::Config("ensemble inputs have no single waveshape".into())),
        }
    }

    pub fn ensemble(&self) -> Result<Option<EnsembleSpec>> {
        match self {
            InputSpec::Ensemble(b) => Ok(Some(EnsembleSpec::new(
                b.iter().map(|c| c.to_branch()).collect::<Result<Vec<_>>>()?,
            )?)),
            _ => Ok(None),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InputSpec::Preset(p) => p.to_string(),
            InputSpec::Waveshape(_) => "custom".into(),
            InputSpec::Ensemble(b) => format!("ensemble({})", b.len()),
        }
    }
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub input: InputSpec,
    pub sim: SimConfig,
    pub sweep: Option<SweepConfig>,
}

impl RawConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Applies defaults and validates the simulation parameters.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let input = match (&self.preset, &self.waveshape, &self.ensemble) {
            (None, None, None) => InputSpec::Preset(Preset::S1),
            (Some(p), None, None) => InputSpec::Preset(*p),
            (None, Some(w), None) => InputSpec::Waveshape(*w),
            (None, None, Some(e)) => InputSpec::Ensemble(e.branches.clone()),
            _ => {
                return Err(Error::Config(
                    "give at most one of \"preset\", \"waveshape\", \"ensemble\"".into(),
                ))
            }
        };
        let default_snaps = match &input {
            InputSpec::Preset(p) => p.snapshot_zs(),
            _ => Preset::S1.snapshot_zs(),
        };
        let kernel = GaussianKernel::new(
            self.sigma.unwrap_or(DEFAULT_SIGMA),
            self.truncation_radius.unwrap_or(GaussianKernel::DEFAULT_TRUNCATION),
        )?;
        let grid = self.grid.unwrap_or(GridConfig {
            half_extent: DEFAULT_HALF_EXTENT,
            points: DEFAULT_POINTS,
        });
        let square = Axis::symmetric(grid.half_extent, grid.points)?;
        let check_axis = |a: Option<Axis>| -> Result<Axis> {
            match a {
                Some(a) => Axis::new(a.start, a.spacing, a.count),
                None => Ok(square),
            }
        };
        let sim = SimConfig {
            kernel,
            gamma: self.gamma.unwrap_or(DEFAULT_GAMMA),
            beta1s: self.beta1s.unwrap_or(1.0),
            beta1i: self.beta1i.unwrap_or(-1.0),
            length: self.length.unwrap_or(DEFAULT_LENGTH),
            dz: self.dz.unwrap_or(DEFAULT_DZ),
            eta: check_axis(self.eta_axis)?,
            nu: check_axis(self.nu_axis)?,
            ta: check_axis(self.ta_axis)?,
            snapshot_zs: self.snapshot_zs.clone().unwrap_or(default_snaps),
            fidelity_marks: self.fidelity_marks.clone().unwrap_or_default(),
            probes: self.probes.clone().unwrap_or_default(),
            conservation_tolerance: self.conservation_tolerance.unwrap_or(DEFAULT_CONSERVATION_TOLERANCE),
            boundary_tolerance: self.boundary_tolerance.unwrap_or(Some(DEFAULT_BOUNDARY_TOLERANCE)),
        };
        sim.validate()?;
        input.ensemble()?;
        if let Some(s) = &self.sweep {
            s.points()?;
        }
        Ok(ResolvedConfig {
            input,
            sim,
            sweep: self.sweep.clone(),
        })
    }

    /// Copy with one sweep point applied. A swept preset replaces any
    /// waveshape or ensemble input; the sweep itself is dropped.
    pub fn with_point(&self, point: &SweepPoint) -> Result<RawConfig> {
        let mut c = self.clone();
        c.sweep = None;
        for (key, value) in point {
            match (*key, value) {
                ("preset", SweepValue::Preset(p)) => {
                    c.preset = Some(*p);
                    c.waveshape = None;
                    c.ensemble = None;
                    if self.snapshot_zs.is_none() {
                        c.snapshot_zs = None;
                    }
                }
                ("gamma", SweepValue::Number(v)) => c.gamma = Some(*v),
                ("sigma", SweepValue::Number(v)) => c.sigma = Some(*v),
                ("dz", SweepValue::Number(v)) => c.dz = Some(*v),
                ("L", SweepValue::Number(v)) => c.length = Some(*v),
                ("beta1s", SweepValue::Number(v)) => c.beta1s = Some(*v),
                ("beta1i", SweepValue::Number(v)) => c.beta1i = Some(*v),
                (k, v) => return Err(Error::Config(format!("cannot sweep {k} = {v}"))),
            }
        }
        Ok(c)
    }
}

impl ResolvedConfig {
    /// Every field spelled out; re-resolving the result gives `self` back.
    pub fn to_raw(&self) -> RawConfig {
        let s = &self.sim;
        let (preset, waveshape, ensemble) = match &self.input {
            InputSpec::Preset(p) => (Some(*p), None, None),
            InputSpec::Waveshape(w) => (None, Some(*w), None),
            InputSpec::Ensemble(b) => (None, None, Some(EnsembleConfig { branches: b.clone() })),
        };
        RawConfig {
            preset,
            waveshape,
            ensemble,
            sigma: Some(s.kernel.sigma()),
            truncation_radius: Some(s.kernel.truncation_radius()),
            gamma: Some(s.gamma),
            beta1s: Some(s.beta1s),
            beta1i: Some(s.beta1i),
            length: Some(s.length),
            dz: Some(s.dz),
            grid: None,
            eta_axis: Some(s.eta),
            nu_axis: Some(s.nu),
            ta_axis: Some(s.ta),
            snapshot_zs: Some(s.snapshot_zs.clone()),
            fidelity_marks: Some(s.fidelity_marks.clone()),
            probes: Some(s.probes.clone()),
            conservation_tolerance: Some(s.conservation_tolerance),
            boundary_tolerance: Some(s.boundary_tolerance),
            sweep: self.sweep.clone(),
        }
    }

    /// Canonical JSON of [`to_raw`](Self::to_raw).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_s1_default() {
        let r = RawConfig::from_json("{}").unwrap().resolve().unwrap();
        assert_eq!(r.input, InputSpec::Preset(Preset::S1));
        assert_eq!(r.sim, SimConfig::for_preset(Preset::S1));
    }

    #[test]
    fn preset_snapshot_defaults() {
        let r = RawConfig::from_json(r#"{"preset": "S3"}"#).unwrap().resolve().unwrap();
        assert_eq!(r.sim.snapshot_zs, vec![-3.5, -0.5, 0.0, 0.5, 3.5]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RawConfig::from_json(r#"{"gama": 3}"#), Err(Error::Config(_))));
        assert!(RawConfig::from_json(r#"{"waveshape": {"tau_s": 1, "rotation": 2}}"#).is_err());
    }

    #[test]
    fn invalid_dz_names_invariant() {
        let e = RawConfig::from_json(r#"{"dz": 0.05}"#).unwrap().resolve().unwrap_err();
        assert!(e.to_string().contains("dz"), "{e}");
    }

    #[test]
    fn conflicting_inputs() {
        let e = RawConfig::from_json(r#"{"preset": "S1", "waveshape": {}}"#).unwrap().resolve();
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"{"waveshape": {"t_i0": 1.0}, "L": 9, "grid": {"half_extent": 11, "points": 881},
                       "boundary_tolerance": null, "probes": [[0, 0]]}"#;
        let r = RawConfig::from_json(text).unwrap().resolve().unwrap();
        assert_eq!(r.sim.boundary_tolerance, None);
        let echoed = RawConfig::from_json(&r.canonical_json()).unwrap().resolve().unwrap();
        assert_eq!(echoed, r);
        assert_eq!(echoed.canonical_json(), r.canonical_json());
    }

    #[test]
    fn sweep_product() {
        let raw = RawConfig::from_json(r#"{"sweep": {"gamma": [8, 9, 10], "preset": ["S1", "S2"]}}"#).unwrap();
        let pts = raw.sweep.as_ref().unwrap().points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0][0], ("preset", SweepValue::Preset(Preset::S1)));
        let c = raw.with_point(&pts[4]).unwrap().resolve().unwrap();
        assert_eq!(c.input, InputSpec::Preset(Preset::S2));
        assert_eq!(c.sim.gamma, 9.0);
        let empty = RawConfig::from_json(r#"{"sweep": {"gamma": []}}"#).unwrap();
        assert!(matches!(empty.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn ensemble_input() {
        let r = RawConfig::from_json(
            r#"{"ensemble": {"branches": [{"weight": 0.5, "preset": "S1"},
                                          {"weight": 0.5, "waveshape": {"t_i0": 1}}]}}"#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(r.input.ensemble().unwrap().unwrap().branches().len(), 2);
        let bad = RawConfig::from_json(r#"{"ensemble": {"branches": [{"weight": 0.5, "preset": "S1"}]}}"#)
            .unwrap()
            .resolve();
        assert!(bad.is_err());
    }
}
