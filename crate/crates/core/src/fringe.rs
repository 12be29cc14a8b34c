//! Michelson single-photon fringe contrast and the beat between two
//! detuned sources seen through the same interferometer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analytic::fmt_sig;
use crate::error::{Error, Result};
use crate::optimize::{levenberg_marquardt, LmOptions};
use crate::units::{HBAR_UEV_PS, H_UEV_PS};

/// Interferometer state: zero-delay contrast A₀, delay t and the energy
/// difference ΔE between the two sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MichelsonConfig {
    a0: f64,
    delay_ps: f64,
    detuning_uev: f64,
}

impl MichelsonConfig {
    pub fn new(a0: f64, delay_ps: f64, detuning_uev: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0 <= 1.0) {
            return Err(Error::invalid("a0", format!("must lie in (0, 1], got {a0}")));
        }
        if !delay_ps.is_finite() {
            return Err(Error::invalid("delay_ps", "must be finite"));
        }
        if !detuning_uev.is_finite() {
            return Err(Error::invalid("detuning_ueV", "must be finite"));
        }
        Ok(MichelsonConfig {
            a0,
            delay_ps,
            detuning_uev,
        })
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn delay_ps(&self) -> f64 {
        self.delay_ps
    }

    pub fn detuning_uev(&self) -> f64 {
        self.detuning_uev
    }

    pub fn with_detuning(mut self, detuning_uev: f64) -> Self {
        self.detuning_uev = detuning_uev;
        self
    }
}

/// A0·exp(−|t|/τ_coh).
pub fn single_source_contrast(delay_ps: f64, tau_coh_ps: f64, a0: f64) -> f64 {
    debug_assert!(tau_coh_ps > 0.0);
    a0 * (-delay_ps.abs() / tau_coh_ps).exp()
}

/// Envelope of the sum of two equal-intensity fringe patterns, normalized
/// to A₀: ½·√(a_d² + a_l² + 2·a_d·a_l·cos(ΔE·t/ħ)).
pub fn combined_contrast(cfg: &MichelsonConfig, tau_coh_dot_ps: f64, tau_coh_laser_ps: f64) -> f64 {
    let t = cfg.delay_ps;
    let a_d = single_source_contrast(t, tau_coh_dot_ps, 1.0);
    let a_l = single_source_contrast(t, tau_coh_laser_ps, 1.0);
    let phase = cfg.detuning_uev * t / HBAR_UEV_PS;
    let s = a_d * a_d + a_l * a_l + 2.0 * a_d * a_l * phase.cos();
    0.5 * s.max(0.0).sqrt()
}

/// Period of the beat in ΔE at fixed delay, h/|t| (µeV).
pub fn beat_period_uev(delay_ps: f64) -> f64 {
    H_UEV_PS / delay_ps.abs()
}

/// Contrast over a delay × detuning grid as CSV `delay_ps,detuning_ueV,contrast`.
pub fn contrast_map_csv(delays_ps: &[f64], detunings_uev: &[f64], tau_coh_dot_ps: f64, tau_coh_laser_ps: f64) -> String {
    let mut out = String::from("delay_ps,detuning_ueV,contrast\n");
    for &t in delays_ps {
        for &e in detunings_uev {
            let cfg = MichelsonConfig {
                a0: 1.0,
                delay_ps: t,
                detuning_uev: e,
            };
            let c = combined_contrast(&cfg, tau_coh_dot_ps, tau_coh_laser_ps);
            let _ = writeln!(out, "{},{},{}", fmt_sig(t, 9), fmt_sig(e, 9), fmt_sig(c, 9));
        }
    }
    out
}

/// Measured contrast against detuning (µeV), optionally with per-point
/// standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastScan {
    detuning_uev: Vec<f64>,
    contrast: Vec<f64>,
    sigma: Option<Vec<f64>>,
}

impl ContrastScan {
    pub fn new(detuning_uev: Vec<f64>, contrast: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if detuning_uev.len() != contrast.len() {
            return Err(Error::invalid("contrast", "length differs from detuning grid"));
        }
        if detuning_uev.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("detuning_ueV", "must be finite"));
        }
        if contrast.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("contrast", "values must lie in [0, 1]"));
        }
        if let Some(s) = &sigma {
            if s.len() != contrast.len() {
                return Err(Error::invalid("sigma", "length differs from contrast"));
            }
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid("sigma", "values must be finite and > 0"));
            }
        }
        Ok(ContrastScan {
            detuning_uev,
            contrast,
            sigma,
        })
    }

    /// Parses `detuning_ueV,contrast[,sigma]`, or `piezo_V,contrast[,sigma]`
    /// with an affine map `ΔE = a + b·V`.
    pub fn from_csv(text: &str, affine: Option<(f64, f64)>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty scan file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let map = match cols.first().copied() {
            Some("detuning_ueV") => None,
            Some("piezo_V") => Some(affine.ok_or_else(|| {
                Error::Format("piezo_V scan requires an affine volts -> µeV map".into())
            })?),
            other => return Err(Error::Format(format!("unexpected first column {other:?}"))),
        };
        if cols.get(1) != Some(&"contrast") || cols.len() > 3 || (cols.len() == 3 && cols[2] != "sigma") {
            return Err(Error::Format(format!("unexpected header `{header}`")));
        }
        let with_sigma = cols.len() == 3;
        let (mut x, mut c, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("row {}: {e}", i + 2)))?;
            if fields.len() != cols.len() {
                return Err(Error::Format(format!("row {}: expected {} fields", i + 2, cols.len())));
            }
            let e = match map {
                Some((a, b)) => a + b * fields[0],
                None => fields[0],
            };
            x.push(e);
            c.push(fields[1]);
            if with_sigma {
                s.push(fields[2]);
            }
        }
        Self::new(x, c, with_sigma.then_some(s))
    }

    pub fn len(&self) -> usize {
        self.contrast.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contrast.is_empty()
    }

    pub fn detuning_uev(&self) -> &[f64] {
        &self.detuning_uev
    }

    pub fn contrast(&self) -> &[f64] {
        &self.contrast
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }
}

/// Coherence times the beat model is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatModel {
    pub michelson: MichelsonConfig,
    pub tau_coh_dot_ps: f64,
    pub tau_coh_laser_ps: f64,
}

impl BeatModel {
    /// Expected raw contrast at nominal detuning `x` for offset and scale.
    pub fn predict(&self, x: f64, offset_uev: f64, scale: f64) -> f64 {
        let cfg = self.michelson.with_detuning(scale * (x - offset_uev));
        self.michelson.a0 * combined_contrast(&cfg, self.tau_coh_dot_ps, self.tau_coh_laser_ps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningFit {
    /// Nominal detuning at which the sources are degenerate, wrapped to the
    /// beat period closest to the centre of the scan.
    pub offset_uev: f64,
    pub offset_stderr_uev: f64,
    /// True energy per nominal unit.
    pub scale: f64,
    pub scale_stderr: f64,
    /// Weighted sum of squared residuals.
    pub residual: f64,
    pub chi2_per_dof: f64,
}

/// Least-squares fit of the beat model to a contrast scan, multi-started
/// over one period of initial offsets.
pub fn fit_detuning(scan: &ContrastScan, model: &BeatModel) -> Result<DetuningFit> {
    let n = scan.len();
    if n < 8 {
        return Err(Error::DegenerateScan(format!("{n} points, need at least 8")));
    }
    let t = model.michelson.delay_ps;
    if t == 0.0 {
        return Err(Error::DegenerateScan("zero delay carries no detuning information".into()));
    }
    let a_d = single_source_contrast(t, model.tau_coh_dot_ps, 1.0);
    let a_l = single_source_contrast(t, model.tau_coh_laser_ps, 1.0);
    if a_d * a_l < 1e-12 {
        return Err(Error::DegenerateScan("model has no beat at this delay".into()));
    }
    let period = beat_period_uev(t);
    let x = scan.detuning_uev();
    let (x_min, x_max) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if x_max - x_min < 0.5 * period {
        return Err(Error::DegenerateScan(format!(
            "scan spans {:.3} µeV, less than half the {:.3} µeV beat period",
            x_max - x_min,
            period
        )));
    }
    let c = scan.contrast();
    let (c_min, c_max) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if c_max - c_min <= 1e-12 {
        return Err(Error::DegenerateScan("contrast does not vary".into()));
    }

    let weights: Vec<f64> = match scan.sigma() {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; n],
    };
    let residuals = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(c)
            .zip(&weights)
            .map(|((&xi, &ci), &w)| (model.predict(xi, p[0], p[1]) - ci) * w)
            .collect()
    };

    let mid = 0.5 * (x_min + x_max);
    const STARTS: usize = 8;
    let mut best = None;
    for k in 0..STARTS {
        let start = [mid - 0.5 * period + period * k as f64 / STARTS as f64, 1.0];
        let fit = match levenberg_marquardt(residuals, &start, LmOptions::default()) {
            Ok(f) => f,
            Err(_) => continue,
        };
        if best.as_ref().is_none_or(|b: &crate::optimize::LeastSquaresFit| fit.cost < b.cost) {
            best = Some(fit);
        }
    }
    let best = best.ok_or_else(|| Error::NonConvergence("no start converged".into()))?;
    let cov = best
        .inverse_hessian
        .as_ref()
        .ok_or_else(|| Error::DegenerateScan("offset and scale are not identifiable".into()))?;
    let dof = (n - 2) as f64;
    let chi2_per_dof = best.cost / dof;
    let var_scale = if scan.sigma().is_some() { 1.0 } else { chi2_per_dof };

    let scale = best.params[1].abs();
    if scale == 0.0 {
        return Err(Error::DegenerateScan("fitted scale is zero".into()));
    }
    let period_nominal = period / scale;
    let raw = best.params[0];
    let offset = raw - ((raw - mid) / period_nominal).round() * period_nominal;

    Ok(DetuningFit {
        offset_uev: offset,
        offset_stderr_uev: (cov[(0, 0)] * var_scale).sqrt(),
        scale,
        scale_stderr: (cov[(1, 1)] * var_scale).sqrt(),
        residual: best.cost,
        chi2_per_dof,
    })
}
