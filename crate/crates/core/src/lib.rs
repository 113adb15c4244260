//! Circuit simulator core for switched power-electronics networks.
//!
//! The crate is organised around a small pipeline:
//!
//! - [`netlist`] parses the text netlist format, flattens hierarchical
//!   blocks (subcircuits) and validates the resulting flat circuit.
//! - [`elements`] holds the built-in element templates (resistor,
//!   capacitor, inductor, sources, switch, diode, gate generators) and
//!   their f/g/h equation sets.
//! - [`model`] binds flat instances to templates and resolves gates.
//! - [`mna`] builds the unknown layout and assembles residual/Jacobian
//!   systems by modified nodal analysis.
//! - [`solver`] runs Newton-Raphson, start-up analysis and implicit
//!   transient integration (backward Euler / trapezoidal).
//! - [`ssw`] computes periodic steady-state waveforms directly with a
//!   shooting Newton method on the state variables.
//! - [`postproc`] computes averages, rms values, Fourier spectra and THD.
//! - [`engine`] executes the solve blocks of a parsed document in order
//!   and writes the ASCII output files.

// `!(x > 0.0)` is used throughout to reject NaN along with the
// out-of-domain values; `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elements;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod mna;
pub mod model;
pub mod netlist;
pub mod postproc;
pub mod solver;
pub mod ssw;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::WaveformSet;
