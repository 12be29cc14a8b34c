//! Simulation and analysis of two-photon interference between a
//! sub-Poissonian quantum-dot emitter and a weak Poissonian laser.
//!
//! * [`params`] and [`config`]: validated physical parameters and the flat
//!   config format.
//! * [`analytic`]: closed-form correlation functions and visibilities.
//! * [`fringe`]: single-photon fringe contrast and the two-source beat model.
//! * [`mc`]: Monte Carlo detector click streams.
//! * [`correlator`]: timestamp streams to normalized g²(τ) histograms.
//! * [`inference`]: γ fits and optimum-ratio prediction.
//!
//! Units: picoseconds, µeV, counts/ps.

pub mod analytic;
pub mod config;
pub mod correlator;
pub mod error;
pub mod fringe;
pub mod inference;
pub mod mc;
pub mod optimize;
pub mod params;
pub mod stream;
pub mod units;

pub use error::{Error, Result};
pub use params::{
    intensity_ratio, lorentzian_fwhm, BeamSplitter, CoherentSourceParams, DetectorResponse,
    InterferenceConfig, QuantumSourceParams, SystemParams,
};
