//! Validated physical parameters shared by every other module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{fwhm_to_sigma, HBAR_UEV_PS};

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {v}")))
    }
}

fn check_non_negative(name: &'static str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be >= 0, got {v}")))
    }
}

fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")))
    }
}

/// The sub-Poissonian emitter: detection weight η, coherence time,
/// radiative lifetime and the uncorrelated background fraction b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumSourceParams {
    eta: f64,
    tau_coh_ps: f64,
    tau_rad_ps: f64,
    background_fraction: f64,
}

impl QuantumSourceParams {
    pub fn new(eta: f64, tau_coh_ps: f64, tau_rad_ps: f64, background_fraction: f64) -> Result<Self> {
        check_non_negative("eta", eta)?;
        check_positive("tau_coh_ps", tau_coh_ps)?;
        check_positive("tau_rad_ps", tau_rad_ps)?;
        check_finite("background_fraction", background_fraction)?;
        if !(0.0..1.0).contains(&background_fraction) {
            return Err(Error::invalid(
                "background_fraction",
                format!("must lie in [0, 1), got {background_fraction}"),
            ));
        }
        Ok(QuantumSourceParams {
            eta,
            tau_coh_ps,
            tau_rad_ps,
            background_fraction,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau_coh_ps(&self) -> f64 {
        self.tau_coh_ps
    }

    pub fn tau_rad_ps(&self) -> f64 {
        self.tau_rad_ps
    }

    pub fn background_fraction(&self) -> f64 {
        self.background_fraction
    }

    pub fn with_eta(self, eta: f64) -> Result<Self> {
        Self::new(eta, self.tau_coh_ps, self.tau_rad_ps, self.background_fraction)
    }

    pub fn with_background_fraction(self, b: f64) -> Result<Self> {
        Self::new(self.eta, self.tau_coh_ps, self.tau_rad_ps, b)
    }
}

/// The attenuated laser: detection weight α² and its coherence time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentSourceParams {
    alpha_sq: f64,
    tau_coh_laser_ps: f64,
}

impl CoherentSourceParams {
    pub const DEFAULT_TAU_COH_PS: f64 = 1e6;

    pub fn new(alpha_sq: f64, tau_coh_laser_ps: f64) -> Result<Self> {
        check_non_negative("alpha_sq", alpha_sq)?;
        check_positive("tau_coh_laser_ps", tau_coh_laser_ps)?;
        Ok(CoherentSourceParams {
            alpha_sq,
            tau_coh_laser_ps,
        })
    }

    pub fn alpha_sq(&self) -> f64 {
        self.alpha_sq
    }

    pub fn tau_coh_laser_ps(&self) -> f64 {
        self.tau_coh_laser_ps
    }

    /// The two-photon truncation of the coherent state assumes α² ≪ 1.
    pub fn outside_weak_regime(&self) -> bool {
        self.alpha_sq > 0.1
    }
}

/// Lossless beam splitter, R + T = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitter {
    reflectance: f64,
    transmittance: f64,
}

impl BeamSplitter {
    pub fn new(reflectance: f64, transmittance: f64) -> Result<Self> {
        check_unit_interval("R", reflectance)?;
        check_unit_interval("T", transmittance)?;
        if (reflectance + transmittance - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "R",
                format!("R + T must equal 1, got {}", reflectance + transmittance),
            ));
        }
        Ok(BeamSplitter {
            reflectance,
            transmittance,
        })
    }

    pub fn from_reflectance(reflectance: f64) -> Result<Self> {
        Self::new(reflectance, 1.0 - reflectance)
    }

    pub fn balanced() -> Self {
        BeamSplitter {
            reflectance: 0.5,
            transmittance: 0.5,
        }
    }

    pub fn reflectance(&self) -> f64 {
        self.reflectance
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn is_balanced(&self) -> bool {
        (self.reflectance - self.transmittance).abs() <= 1e-12
    }
}

/// Gaussian pair-timing response and per-detector dark rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorResponse {
    pair_fwhm_ps: f64,
    dark_rate_per_ps: f64,
}

impl DetectorResponse {
    pub fn new(pair_fwhm_ps: f64, dark_rate_per_ps: f64) -> Result<Self> {
        check_non_negative("pair_fwhm_ps", pair_fwhm_ps)?;
        check_non_negative("dark_rate_per_ps", dark_rate_per_ps)?;
        Ok(DetectorResponse {
            pair_fwhm_ps,
            dark_rate_per_ps,
        })
    }

    /// Builds the response from the jitter of a single detector; the pair
    /// response is the difference of two independent jitters.
    pub fn from_detector_sigma(sigma_ps: f64, dark_rate_per_ps: f64) -> Result<Self> {
        check_non_negative("detector_sigma_ps", sigma_ps)?;
        Self::new(
            sigma_ps * std::f64::consts::SQRT_2 * crate::units::FWHM_PER_SIGMA,
            dark_rate_per_ps,
        )
    }

    pub fn pair_fwhm_ps(&self) -> f64 {
        self.pair_fwhm_ps
    }

    pub fn dark_rate_per_ps(&self) -> f64 {
        self.dark_rate_per_ps
    }

    pub fn pair_sigma_ps(&self) -> f64 {
        fwhm_to_sigma(self.pair_fwhm_ps)
    }

    pub fn detector_sigma_ps(&self) -> f64 {
        self.pair_sigma_ps() / std::f64::consts::SQRT_2
    }
}

/// Wave-function overlap γ and polarization angle φ (stored in degrees, the
/// unit of the config file).
///
/// `finite_laser_coherence` switches the interference decay from the dot
/// coherence time alone to the combined rate 1/τ_dot + 1/τ_laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceConfig {
    gamma: f64,
    phi_deg: f64,
    finite_laser_coherence: bool,
}

impl InterferenceConfig {
    pub fn new(gamma: f64, phi_rad: f64) -> Result<Self> {
        Self::from_degrees(gamma, phi_rad.to_degrees())
    }

    pub fn from_degrees(gamma: f64, phi_deg: f64) -> Result<Self> {
        check_unit_interval("gamma", gamma)?;
        check_finite("phi", phi_deg)?;
        Ok(InterferenceConfig {
            gamma,
            phi_deg,
            finite_laser_coherence: false,
        })
    }

    pub fn with_finite_laser_coherence(mut self, on: bool) -> Self {
        self.finite_laser_coherence = on;
        self
    }

    pub fn with_phi_deg(self, phi_deg: f64) -> Result<Self> {
        Ok(Self::from_degrees(self.gamma, phi_deg)?.with_finite_laser_coherence(self.finite_laser_coherence))
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Ok(Self::from_degrees(gamma, self.phi_deg)?.with_finite_laser_coherence(self.finite_laser_coherence))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn phi_rad(&self) -> f64 {
        self.phi_deg.to_radians()
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi_deg
    }

    pub fn finite_laser_coherence(&self) -> bool {
        self.finite_laser_coherence
    }

    /// γ²cos²φ, the depth of the two-photon interference term.
    pub fn interference_depth(&self) -> f64 {
        let c = self.phi_rad().cos();
        (self.gamma * self.gamma * c * c).clamp(0.0, 1.0)
    }
}

/// Everything the closed-form model and the simulator need about the setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub quantum: QuantumSourceParams,
    pub coherent: CoherentSourceParams,
    pub splitter: BeamSplitter,
    pub detector: DetectorResponse,
    pub interference: InterferenceConfig,
}

impl SystemParams {
    /// Parameters of the reference experiment: η = α² = 1e-3, τ_coh = 285 ps,
    /// τ_rad = 985 ps, b = 0.04, laser coherence 1 µs, 428 ps response FWHM,
    /// γ = 0.91, parallel polarization and a 50/50 splitter.
    pub fn reference() -> Self {
        SystemParams {
            quantum: QuantumSourceParams {
                eta: 1e-3,
                tau_coh_ps: 285.0,
                tau_rad_ps: 985.0,
                background_fraction: 0.04,
            },
            coherent: CoherentSourceParams {
                alpha_sq: 1e-3,
                tau_coh_laser_ps: 1e6,
            },
            splitter: BeamSplitter::balanced(),
            detector: DetectorResponse {
                pair_fwhm_ps: 428.0,
                dark_rate_per_ps: 0.0,
            },
            interference: InterferenceConfig {
                gamma: 0.91,
                phi_deg: 0.0,
                finite_laser_coherence: false,
            },
        }
    }

    pub fn intensity_ratio(&self) -> Result<f64> {
        intensity_ratio(&self.quantum, &self.coherent)
    }

    /// Decay time of the interference term.
    pub fn interference_coherence_ps(&self) -> f64 {
        let dot = self.quantum.tau_coh_ps;
        if self.interference.finite_laser_coherence {
            1.0 / (1.0 / dot + 1.0 / self.coherent.tau_coh_laser_ps)
        } else {
            dot
        }
    }

    pub fn with_phi_deg(mut self, phi_deg: f64) -> Result<Self> {
        self.interference = self.interference.with_phi_deg(phi_deg)?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.interference = self.interference.with_gamma(gamma)?;
        Ok(self)
    }

    pub fn with_pair_fwhm(mut self, fwhm_ps: f64) -> Result<Self> {
        self.detector = DetectorResponse::new(fwhm_ps, self.detector.dark_rate_per_ps)?;
        Ok(self)
    }

    pub fn with_background_fraction(mut self, b: f64) -> Result<Self> {
        self.quantum = self.quantum.with_background_fraction(b)?;
        Ok(self)
    }

    /// Sets η so that η/α² equals `ratio`, keeping α².
    pub fn with_ratio(mut self, ratio: f64) -> Result<Self> {
        check_non_negative("ratio", ratio)?;
        self.quantum = self.quantum.with_eta(ratio * self.coherent.alpha_sq)?;
        Ok(self)
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// η/α², the ratio of detected intensities.
pub fn intensity_ratio(q: &QuantumSourceParams, c: &CoherentSourceParams) -> Result<f64> {
    if c.alpha_sq == 0.0 {
        return Err(Error::DivisionByZero("alpha_sq is zero"));
    }
    Ok(q.eta / c.alpha_sq)
}

/// Lorentzian linewidth 2ħ/τ_coh in µeV.
pub fn lorentzian_fwhm(q: &QuantumSourceParams) -> f64 {
    2.0 * HBAR_UEV_PS / q.tau_coh_ps
}
