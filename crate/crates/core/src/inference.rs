//! Overlap estimation from visibility-versus-ratio data and the optimum
//! intensity ratio.

use serde::{Deserialize, Serialize};

use crate::analytic::{fmt_sig, g2_full_curve, symmetric_grid, Response, ZeroDelayTerms};
use crate::correlator::{correlate, dip_statistics, paired_visibility, CorrelationHistogram};
use crate::error::{Error, Result};
use crate::mc::{simulate, McMode, McRunConfig};
use crate::optimize::golden_section_min;
use crate::params::SystemParams;

/// Lowest visibility accepted from data; noise can push small values
/// slightly negative.
pub const MIN_VISIBILITY: f64 = -0.2;

/// Search interval for [`predict_optimum`].
pub const RATIO_SEARCH: (f64, f64) = (1e-6, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPoint {
    pub ratio: f64,
    pub visibility: f64,
    pub sigma: f64,
}

impl VisibilityPoint {
    pub fn new(ratio: f64, visibility: f64, sigma: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::invalid("ratio", format!("must be finite and > 0, got {ratio}")));
        }
        if !(MIN_VISIBILITY..=1.0).contains(&visibility) {
            return Err(Error::invalid(
                "visibility",
                format!("must lie in [{MIN_VISIBILITY}, 1], got {visibility}"),
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be finite and > 0, got {sigma}")));
        }
        Ok(VisibilityPoint { ratio, visibility, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma_hat: f64,
    pub stderr: f64,
    pub chi2_per_dof: f64,
    /// The estimate sits on 0 or 1.
    pub at_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityCurve {
    pub points: Vec<VisibilityPoint>,
    pub fit: Option<GammaFit>,
}

impl VisibilityCurve {
    pub fn new(points: Vec<VisibilityPoint>) -> Self {
        VisibilityCurve { points, fit: None }
    }

    /// Reads `ratio,visibility,sigma` rows after a header line.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| Error::Format("empty points file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["ratio", "visibility", "sigma"] {
            return Err(Error::Format(format!(
                "line {hline}: expected header `ratio,visibility,sigma`, found `{header}`"
            )));
        }
        let mut points = Vec::new();
        for (n, line) in lines {
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {n}: {e}")))?;
            if vals.len() != 3 {
                return Err(Error::Format(format!("line {n}: expected 3 fields, found {}", vals.len())));
            }
            points.push(
                VisibilityPoint::new(vals[0], vals[1], vals[2])
                    .map_err(|e| Error::Format(format!("line {n}: {e}")))?,
            );
        }
        Ok(VisibilityCurve::new(points))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ratio,visibility,sigma\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_sig(p.ratio, 12),
                fmt_sig(p.visibility, 9),
                fmt_sig(p.sigma, 9)
            ));
        }
        out
    }
}

fn chi2(points: &[VisibilityPoint], terms: &ZeroDelayTerms, gamma: f64) -> f64 {
    points
        .iter()
        .map(|pt| ((terms.visibility(pt.ratio, gamma) - pt.visibility) / pt.sigma).powi(2))
        .sum()
}

/// Weighted least squares of the convolved visibility model over γ ∈ [0, 1]
/// with every other parameter of `p` held fixed. The standard error comes
/// from the linearized model at the optimum.
pub fn fit_gamma(points: &[VisibilityPoint], p: &SystemParams) -> Result<GammaFit> {
    if points.len() < 3 {
        return Err(Error::invalid("points", format!("need at least 3, got {}", points.len())));
    }
    for pt in points {
        VisibilityPoint::new(pt.ratio, pt.visibility, pt.sigma)?;
    }
    let terms = ZeroDelayTerms::new(p)?;
    let best = golden_section_min(|g| chi2(points, &terms, g), 0.0, 1.0, 1e-10)?;
    let g = best.x;
    let at_boundary = g <= 1e-6 || g >= 1.0 - 1e-6;
    if at_boundary {
        log::warn!("fitted overlap {g:.6} is pinned at the edge of [0, 1]");
    }

    let h = 1e-5;
    let (lo, hi) = ((g - h).max(0.0), (g + h).min(1.0));
    let info: f64 = points
        .iter()
        .map(|pt| {
            let d = (terms.visibility(pt.ratio, hi) - terms.visibility(pt.ratio, lo)) / (hi - lo);
            (d / pt.sigma).powi(2)
        })
        .sum();
    let stderr = if info > 0.0 { info.sqrt().recip() } else { f64::INFINITY };
    Ok(GammaFit {
        gamma_hat: g,
        stderr,
        chi2_per_dof: best.value / (points.len() - 1) as f64,
        at_boundary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumPrediction {
    pub ratio_star: f64,
    pub v_max: f64,
    /// The maximum lies on the upper end of the search interval, so the
    /// visibility keeps growing with the ratio.
    pub at_boundary: bool,
}

/// Maximizes the convolved visibility over the intensity ratio.
pub fn predict_optimum(p: &SystemParams) -> Result<OptimumPrediction> {
    let terms = ZeroDelayTerms::new(p)?;
    let gamma = p.interference.gamma();
    let (lo, hi) = RATIO_SEARCH;
    let best = golden_section_min(|r| -terms.visibility(r, gamma), lo, hi, 1e-9)?;
    let at_boundary = best.x >= hi * (1.0 - 1e-9);
    if at_boundary {
        log::warn!("visibility still rising at ratio {hi}; optimum lies beyond the search range");
    }
    Ok(OptimumPrediction {
        ratio_star: best.x,
        v_max: (-best.value).max(0.0),
        at_boundary,
    })
}

/// Report combining a γ fit and the optimum it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub gamma_hat: f64,
    pub stderr: f64,
    pub chi2_per_dof: f64,
    pub ratio_star: f64,
    pub v_max: f64,
}

/// Fits γ and predicts the optimum ratio for the fitted overlap.
pub fn fit_report(points: &[VisibilityPoint], p: &SystemParams) -> Result<FitReport> {
    let fit = fit_gamma(points, p)?;
    let opt = predict_optimum(&p.with_gamma(fit.gamma_hat)?)?;
    Ok(FitReport {
        gamma_hat: fit.gamma_hat,
        stderr: fit.stderr,
        chi2_per_dof: fit.chi2_per_dof,
        ratio_star: opt.ratio_star,
        v_max: opt.v_max,
    })
}

/// Settings shared by the simulated acquisitions of one visibility curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionPlan {
    pub laser_rate_per_ps: f64,
    pub bin_width_ps: f64,
    pub max_tau_ps: f64,
    /// Target coincidences inside the histogram window per polarization.
    pub target_coincidences: f64,
}

impl Default for AcquisitionPlan {
    fn default() -> Self {
        AcquisitionPlan {
            laser_rate_per_ps: 2e-5,
            bin_width_ps: 64.0,
            max_tau_ps: 6400.0,
            target_coincidences: 1.5e5,
        }
    }
}

impl AcquisitionPlan {
    /// Run length giving the target coincidence count at `ratio` for
    /// uncorrelated clicks split evenly onto both detectors.
    pub fn duration_ps(&self, ratio: f64) -> f64 {
        let per_channel = 0.5 * (1.0 + ratio) * self.laser_rate_per_ps;
        let k = (self.max_tau_ps / self.bin_width_ps).floor();
        let window = (2.0 * k + 1.0) * self.bin_width_ps;
        self.target_coincidences / (per_channel * per_channel * window)
    }
}

/// Parallel and orthogonal histograms recorded at one ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedAcquisition {
    pub ratio: f64,
    pub parallel: CorrelationHistogram,
    pub orthogonal: CorrelationHistogram,
}

/// Simulates both polarization settings at `ratio`. The orthogonal run uses
/// `seed + 1`, so callers should step seeds by 2.
pub fn simulate_paired(p: &SystemParams, ratio: f64, plan: &AcquisitionPlan, seed: u64) -> Result<PairedAcquisition> {
    let base = p.with_ratio(ratio)?;
    let duration = plan.duration_ps(ratio);
    let mut hist = Vec::with_capacity(2);
    for (phi, s) in [(0.0, seed), (90.0, seed.wrapping_add(1))] {
        let cfg = McRunConfig::new(base.with_phi_deg(phi)?, McMode::TwoSource, plan.laser_rate_per_ps, duration, s)?;
        hist.push(correlate(&simulate(&cfg)?, plan.bin_width_ps, plan.max_tau_ps)?);
    }
    let orthogonal = hist.pop().expect("two runs");
    let parallel = hist.pop().expect("two runs");
    Ok(PairedAcquisition {
        ratio,
        parallel,
        orthogonal,
    })
}

/// Visibility of one paired acquisition. The dip shapes are taken from the
/// convolved model with overlap `template.interference.gamma()`.
pub fn measure_visibility(acq: &PairedAcquisition, template: &SystemParams) -> Result<VisibilityPoint> {
    let base = template.with_ratio(acq.ratio)?;
    let half_span = (acq.parallel.half_bins() as f64 + 1.0) * acq.parallel.bin_width_ps();
    let step = base.detector.pair_fwhm_ps() / 32.0;
    let step = if step > 0.0 { step } else { base.quantum.tau_coh_ps() / 64.0 };
    let mut dips = Vec::with_capacity(2);
    for (phi, h) in [(0.0, &acq.parallel), (90.0, &acq.orthogonal)] {
        let model = g2_full_curve(symmetric_grid(half_span, step), &base.with_phi_deg(phi)?, Response::Convolved)?;
        dips.push(dip_statistics(h, &model)?);
    }
    let v = paired_visibility(&dips[0], &dips[1])?;
    VisibilityPoint::new(acq.ratio, v.visibility.max(MIN_VISIBILITY), v.sigma)
}

/// Fits γ to simulated acquisitions, starting the dip templates at γ = 1
/// and refining them with the running estimate.
pub fn fit_gamma_from_acquisitions(
    acqs: &[PairedAcquisition],
    p: &SystemParams,
    rounds: usize,
) -> Result<(GammaFit, Vec<VisibilityPoint>)> {
    let mut template = p.with_gamma(1.0)?;
    let mut last = None;
    for _ in 0..rounds.max(1) {
        let points = acqs
            .iter()
            .map(|a| measure_visibility(a, &template))
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_gamma(&points, p)?;
        template = p.with_gamma(fit.gamma_hat)?;
        last = Some((fit, points));
    }
    Ok(last.expect("at least one round"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_validation() {
        assert!(VisibilityPoint::new(0.0, 0.3, 0.1).is_err());
        assert!(VisibilityPoint::new(1.0, -0.3, 0.1).is_err());
        assert!(VisibilityPoint::new(1.0, 1.1, 0.1).is_err());
        assert!(VisibilityPoint::new(1.0, 0.3, 0.0).is_err());
        assert!(VisibilityPoint::new(1.0, -0.1, 0.1).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let c = VisibilityCurve::new(vec![
            VisibilityPoint::new(0.25, 0.125, 0.02).unwrap(),
            VisibilityPoint::new(4.0, 0.3, 0.02).unwrap(),
        ]);
        let back = VisibilityCurve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
        assert!(VisibilityCurve::from_csv("ratio,vis\n1,2\n").is_err());
        assert!(VisibilityCurve::from_csv("ratio,visibility,sigma\n1,0.2\n").is_err());
        assert!(VisibilityCurve::from_csv("ratio,visibility,sigma\n1,0.2,x\n").is_err());
    }

    #[test]
    fn too_few_points() {
        let pts = vec![VisibilityPoint::new(1.0, 0.3, 0.02).unwrap(); 2];
        assert!(fit_gamma(&pts, &SystemParams::reference()).is_err());
    }

    #[test]
    fn durations_hit_target() {
        let plan = AcquisitionPlan::default();
        let d = plan.duration_ps(1.0);
        let n = 2e-5 * d;
        let expected = n * n * 201.0 * 64.0 / d;
        assert!((expected / plan.target_coincidences - 1.0).abs() < 1e-12);
        assert!(plan.duration_ps(4.0) < d);
    }
}
