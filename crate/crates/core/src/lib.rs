//! Simulation of frequency-multiplexed dispersive readout.
//!
//! Four transmon qubits, each coupled to its own readout cavity, share a
//! single feedline and a broadband parametric amplifier. Readout tones are
//! synthesized as sidebands of one carrier, reflected off the cavities,
//! amplified with quantum-limited noise, digitized and demodulated in
//! software. The analysis layer turns shot ensembles into histograms,
//! thresholds and fidelities, quantum-jump statistics, Ramsey fits and
//! dispersive-shift estimates.
//!
//! Units: frequencies are ordinary frequencies (GHz for absolute values, MHz
//! for offsets and rates), times are μs, and waveform amplitudes are
//! incident-flux amplitudes in √(photons/μs). Angular rates appear only
//! inside the physics routines.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amp;
pub mod analysis;
pub mod dsp;
pub mod error;
pub mod feedline;
pub mod fit;
pub mod params;
pub mod qubit;
pub mod runner;

pub use error::{Error, Result};
pub use params::{DeviceConfig, QubitCavityConfig, QubitState};
