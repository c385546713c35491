//! Deterministic fixed-step simulation of a three-phase dc/ac voltage-source
//! converter under per-phase grid-forming droop control.
//!
//! The crate is organized as a small pipeline:
//!
//! * [`dsp`] — single-phase signal blocks: quarter-period delay quadrature,
//!   dq rotations, per-phase power computation, notch filtering, PI control.
//! * [`control`] — the droop laws and the cascaded voltage/current loops,
//!   wired into two complete controllers: a per-phase (generalized) droop
//!   controller and a conventional positive-sequence baseline.
//! * [`network`] — an electromagnetic-transient model of the test circuit
//!   (converter filter, transformers, lines, grid equivalent), assembled into
//!   a linear state-space system and integrated with the trapezoidal rule.
//! * [`analysis`] — offline waveform analysis: fundamental phasors,
//!   symmetrical components, unbalance factors, rolling cycle maxima, THD.
//! * [`scenario`] — deterministic co-simulation of controller and plant plus
//!   the packaged studies (coupling-gain sweep, single-line-to-ground fault).
//!
//! All electrical quantities are in per-unit with peak scaling: a balanced
//! set at rated voltage has phase peaks of 1.0. Angles are in radians, time
//! in seconds.

pub mod analysis;
pub mod control;
pub mod dsp;
pub mod network;
pub mod scenario;
pub mod types;

pub use types::{Phase, ThreePhase};
