//! Simulation of coherent-photon-conversion sign gates acting on two-photon
//! wavepackets with a non-instantaneous nonlinear response.
//!
//! The crate integrates the coupled signal-idler / ancilla amplitude
//! equations in a frame comoving with each photon, and provides the
//! diagnostics and reductions needed to interpret the runs: gate fidelity,
//! fourth-order coherence, a variable-frequency oscillator model of the
//! conversion front, and conversion of laboratory parameters.

pub mod calibration;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod gridio;
pub mod kernel;
pub mod observables;
pub mod optimize;
pub mod oracle;
pub mod propagator;
pub mod units;
pub mod waveshapes;

pub use error::{Error, Result};
pub use grid::{Axis, ComplexGrid1D, ComplexGrid2D, SimState};
pub use kernel::{GaussianKernel, SeparableKernel};
pub use num_complex::Complex64;
pub use propagator::{run, RunRecord, SimConfig};
pub use waveshapes::{Preset, WaveshapeSpec};
