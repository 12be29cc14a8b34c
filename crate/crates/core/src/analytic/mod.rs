//! Closed-form correlation functions for the dot + laser interference
//! experiment, with and without the Gaussian detector response.

mod convolve;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{DetectorResponse, QuantumSourceParams, SystemParams};

pub(crate) use convolve::smooth_at;

/// Whether a correlation function includes the detector response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Response {
    /// Infinitely fast detectors.
    Ideal,
    /// Convolved with the Gaussian pair response.
    Convolved,
}

/// g²(τ) sampled on an ordered grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub tau_ps: Vec<f64>,
    pub values: Vec<f64>,
    pub params: Option<SystemParams>,
    pub convolved: bool,
}

/// `-half_span ..= half_span` in steps of `step`, symmetric and containing 0.
pub fn symmetric_grid(half_span_ps: f64, step_ps: f64) -> Vec<f64> {
    let n = (half_span_ps / step_ps).round() as i64;
    (-n..=n).map(|i| i as f64 * step_ps).collect()
}

impl CorrelationCurve {
    pub fn from_fn(tau_ps: Vec<f64>, f: impl Fn(f64) -> f64) -> Self {
        let values = tau_ps.iter().map(|&t| f(t)).collect();
        CorrelationCurve {
            tau_ps,
            values,
            params: None,
            convolved: false,
        }
    }

    pub fn len(&self) -> usize {
        self.tau_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_ps.is_empty()
    }

    /// Grid step if the grid is uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        if self.tau_ps.len() < 2 {
            return Err(Error::NonUniformGrid);
        }
        let h = (self.tau_ps[self.tau_ps.len() - 1] - self.tau_ps[0]) / (self.tau_ps.len() - 1) as f64;
        let uniform = h > 0.0
            && self
                .tau_ps
                .windows(2)
                .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        if uniform {
            Ok(h)
        } else {
            Err(Error::NonUniformGrid)
        }
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn value_at(&self, tau: f64) -> Option<f64> {
        let t = &self.tau_ps;
        if t.is_empty() || tau < t[0] || tau > t[t.len() - 1] {
            return None;
        }
        let i = t.partition_point(|&x| x <= tau);
        if i == 0 {
            return Some(self.values[0]);
        }
        if i == t.len() {
            return Some(self.values[t.len() - 1]);
        }
        let (t0, t1) = (t[i - 1], t[i]);
        let f = (tau - t0) / (t1 - t0);
        Some(self.values[i - 1] + f * (self.values[i] - self.values[i - 1]))
    }

    /// Mean of the linear interpolant over `[lo, hi]`.
    pub fn mean_over(&self, lo: f64, hi: f64) -> Option<f64> {
        const SUB: usize = 16;
        let dx = (hi - lo) / SUB as f64;
        let mut acc = 0.0;
        for k in 0..SUB {
            acc += self.value_at(lo + (k as f64 + 0.5) * dx)?;
        }
        Some(acc / SUB as f64)
    }

    /// CSV with header `tau_ps,g2`, nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_ps,g2\n");
        for (t, v) in self.tau_ps.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", fmt_sig(*t, 9), fmt_sig(*v, 9));
        }
        out
    }
}

/// Formats with `digits` significant digits, trimming redundant zeros.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.*e}", digits - 1, v);
    let parsed: f64 = s.parse().unwrap_or(v);
    format!("{parsed}")
}

/// Zero-delay coincidence level for indistinguishable photons,
/// (1 + η/α²)⁻².
pub fn g2_parallel_ideal(ratio: f64) -> f64 {
    if ratio.is_infinite() {
        return 0.0;
    }
    (1.0 + ratio).powi(-2)
}

/// Zero-delay coincidence level for fully distinguishable photons,
/// (1 + 2η/α²)(1 + η/α²)⁻².
pub fn g2_orthogonal_ideal(ratio: f64) -> f64 {
    if ratio.is_infinite() {
        return 0.0;
    }
    (1.0 + 2.0 * ratio) / (1.0 + ratio).powi(2)
}

/// (g²⊥(0) − g²∥(0)) / g²⊥(0) = 2r / (1 + 2r).
pub fn visibility_ideal(ratio: f64) -> f64 {
    if ratio.is_infinite() {
        return 1.0;
    }
    2.0 * ratio / (1.0 + 2.0 * ratio)
}

/// Dot autocorrelation for fast detectors. Background enters as an
/// uncorrelated admixture, which scales the dip by (1 − b)².
pub fn hbt_dot_ideal(tau_ps: f64, q: &QuantumSourceParams) -> f64 {
    let s = 1.0 - q.background_fraction();
    1.0 - s * s * (-tau_ps.abs() / q.tau_rad_ps()).exp()
}

/// Convolves a uniformly sampled curve with the pair response.
pub fn convolve_response(curve: &CorrelationCurve, d: &DetectorResponse) -> Result<CorrelationCurve> {
    let fwhm = d.pair_fwhm_ps();
    let mut out = curve.clone();
    out.convolved = true;
    if fwhm == 0.0 {
        return Ok(out);
    }
    let h = curve.uniform_step()?;
    if h > fwhm / 8.0 {
        return Err(Error::GridTooCoarse {
            step_ps: h,
            limit_ps: fwhm / 8.0,
        });
    }
    out.values = convolve::smooth_samples(&curve.values, h, d.pair_sigma_ps());
    Ok(out)
}

/// Correlation inside the detector convolution, at intensity ratio `r`,
/// interference depth γ²cos²φ and decay time `tau_int`.
fn g2_bracket(tau: f64, r: f64, depth: f64, tau_int: f64, q: &QuantumSourceParams) -> f64 {
    let cross = 2.0 * r * (1.0 - depth * (-tau.abs() / tau_int).exp());
    (cross + r * r * hbt_dot_ideal(tau, q) + 1.0) / (1.0 + r).powi(2)
}

fn quadrature_step(p: &SystemParams, tau_int: f64) -> f64 {
    p.detector
        .pair_fwhm_ps()
        .min(tau_int)
        .min(p.quantum.tau_rad_ps())
        / 64.0
}

fn check_model(p: &SystemParams) -> Result<()> {
    if !p.splitter.is_balanced() {
        return Err(Error::UnsupportedSplitter {
            reflectance: p.splitter.reflectance(),
            transmittance: p.splitter.transmittance(),
        });
    }
    Ok(())
}

fn g2_at_ratio(tau_ps: f64, ratio: f64, p: &SystemParams, response: Response) -> f64 {
    let depth = p.interference.interference_depth();
    let tau_int = p.interference_coherence_ps();
    let q = p.quantum;
    let f = |t: f64| g2_bracket(t, ratio, depth, tau_int, &q);
    match response {
        Response::Ideal => f(tau_ps),
        Response::Convolved => smooth_at(f, tau_ps, p.detector.pair_sigma_ps(), quadrature_step(p, tau_int)),
    }
}

/// Cross-correlation of the two splitter outputs for the full two-source
/// model at delay `tau_ps`.
pub fn g2_full(tau_ps: f64, p: &SystemParams, response: Response) -> Result<f64> {
    check_model(p)?;
    let total = p.quantum.eta() + p.coherent.alpha_sq();
    if total <= 0.0 {
        return Err(Error::invalid("eta", "eta + alpha_sq must be positive"));
    }
    if p.coherent.alpha_sq() == 0.0 {
        // dot only: the bracket reduces to the HBT function
        let q = p.quantum;
        return Ok(match response {
            Response::Ideal => hbt_dot_ideal(tau_ps, &q),
            Response::Convolved => smooth_at(
                |t| hbt_dot_ideal(t, &q),
                tau_ps,
                p.detector.pair_sigma_ps(),
                quadrature_step(p, p.quantum.tau_rad_ps()),
            ),
        });
    }
    Ok(g2_at_ratio(tau_ps, p.intensity_ratio()?, p, response))
}

/// [`g2_full`] evaluated on a grid.
pub fn g2_full_curve(tau_ps: Vec<f64>, p: &SystemParams, response: Response) -> Result<CorrelationCurve> {
    let values = tau_ps
        .iter()
        .map(|&t| g2_full(t, p, response))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationCurve {
        tau_ps,
        values,
        params: Some(*p),
        convolved: response == Response::Convolved,
    })
}

/// Dot autocorrelation curve, optionally convolved via [`convolve_response`]
/// on a grid of step FWHM/32 (or `step_ps` when given).
pub fn hbt_dot_curve(
    half_span_ps: f64,
    step_ps: Option<f64>,
    p: &SystemParams,
    response: Response,
) -> Result<CorrelationCurve> {
    let fwhm = p.detector.pair_fwhm_ps();
    let step = step_ps.unwrap_or(if fwhm > 0.0 { fwhm / 32.0 } else { 1.0 });
    let q = p.quantum;
    let mut curve = CorrelationCurve::from_fn(symmetric_grid(half_span_ps, step), |t| hbt_dot_ideal(t, &q));
    curve.params = Some(*p);
    match response {
        Response::Ideal => Ok(curve),
        Response::Convolved => convolve_response(&curve, &p.detector),
    }
}

/// Convolved zero-delay values of the two decaying terms of the model. Both
/// are independent of the ratio and of γ, so visibility scans reuse them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroDelayTerms {
    /// exp(−|τ|/τ_coh) convolved with the response, at τ = 0.
    pub overlap_decay: f64,
    /// Convolved dot autocorrelation at τ = 0.
    pub hbt_zero: f64,
}

impl ZeroDelayTerms {
    pub fn new(p: &SystemParams) -> Result<Self> {
        check_model(p)?;
        let tau_int = p.interference_coherence_ps();
        let sigma = p.detector.pair_sigma_ps();
        let q = p.quantum;
        let h = quadrature_step(p, tau_int);
        Ok(ZeroDelayTerms {
            overlap_decay: smooth_at(|t| (-t.abs() / tau_int).exp(), 0.0, sigma, h),
            hbt_zero: smooth_at(|t| hbt_dot_ideal(t, &q), 0.0, sigma, h),
        })
    }

    /// (g²⊥(0) − g²∥(0)) / g²⊥(0) at ratio r and overlap γ.
    pub fn visibility(&self, ratio: f64, gamma: f64) -> f64 {
        let r = ratio;
        let orth = 2.0 * r + r * r * self.hbt_zero + 1.0;
        2.0 * r * gamma * gamma * self.overlap_decay / orth
    }
}

/// Zero-delay visibility including the detector response, at ratio r = η/α².
pub fn visibility_convolved(ratio: f64, p: &SystemParams) -> Result<f64> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(Error::invalid("ratio", format!("must be finite and >= 0, got {ratio}")));
    }
    Ok(ZeroDelayTerms::new(p)?.visibility(ratio, p.interference.gamma()))
}
