//! Unit conventions and physical constants.
//!
//! Times are in picoseconds, energies in µeV and rates in counts/ps
//! throughout the crate.

/// Reduced Planck constant, µeV·ps.
pub const HBAR_UEV_PS: f64 = 658.211_956_9;

/// Planck constant, µeV·ps. Derived from ħ so that h/ħ is 2π to rounding.
pub const H_UEV_PS: f64 = std::f64::consts::TAU * HBAR_UEV_PS;

/// Ratio between the FWHM and the standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub h: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            hbar: HBAR_UEV_PS,
            h: H_UEV_PS,
        }
    }
}

/// Standard deviation of a Gaussian with the given FWHM.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * FWHM_PER_SIGMA
}
