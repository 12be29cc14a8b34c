//! Two-channel coincidence histograms and dip statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{fmt_sig, CorrelationCurve};
use crate::error::{Error, Result};
use crate::stream::{Channel, TimestampStream};

/// Upper bound on `max_tau / bin_width`.
pub const MAX_HALF_BINS: f64 = 1e6;

/// Minimum number of non-empty bins for [`dip_statistics`].
pub const MIN_FIT_BINS: usize = 10;

const CHUNK: usize = 1 << 16;

/// Coincidence histogram of τ = t(D3) − t(D2). Bin `k` is centered on
/// `k·bin_width` for `k ∈ [−K, K]`, so τ = 0 is always a bin center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    bin_width_ps: f64,
    half_bins: usize,
    counts: Vec<u64>,
    normalized: Vec<f64>,
    sigma: Vec<f64>,
    accidental_level: f64,
    n_start: usize,
    n_stop: usize,
    duration_ps: f64,
}

impl CorrelationHistogram {
    fn from_counts(counts: Vec<u64>, bin_width_ps: f64, accidental_level: f64, n_start: usize, n_stop: usize, duration_ps: f64) -> Self {
        let half_bins = counts.len() / 2;
        let normalized = counts.iter().map(|&c| c as f64 / accidental_level).collect();
        let sigma = counts.iter().map(|&c| (c as f64).sqrt() / accidental_level).collect();
        CorrelationHistogram {
            bin_width_ps,
            half_bins,
            counts,
            normalized,
            sigma,
            accidental_level,
            n_start,
            n_stop,
            duration_ps,
        }
    }

    /// Histogram from externally accumulated counts. `counts` must have odd
    /// length with the τ = 0 bin in the middle.
    pub fn from_bin_counts(counts: Vec<u64>, bin_width_ps: f64, accidental_level: f64, duration_ps: f64) -> Result<Self> {
        if counts.len() % 2 == 0 {
            return Err(Error::invalid("counts", "need an odd number of bins centred on zero"));
        }
        if !(bin_width_ps > 0.0 && bin_width_ps.is_finite()) {
            return Err(Error::invalid("bin_width_ps", "must be finite and > 0"));
        }
        if !(accidental_level > 0.0 && accidental_level.is_finite()) {
            return Err(Error::invalid("accidental_level", "must be finite and > 0"));
        }
        Ok(Self::from_counts(counts, bin_width_ps, accidental_level, 0, 0, duration_ps))
    }

    pub fn bin_width_ps(&self) -> f64 {
        self.bin_width_ps
    }

    pub fn half_bins(&self) -> usize {
        self.half_bins
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Expected counts per bin for uncorrelated channels.
    pub fn accidental_level(&self) -> f64 {
        self.accidental_level
    }

    pub fn duration_ps(&self) -> f64 {
        self.duration_ps
    }

    /// Clicks on the start (D2) and stop (D3) channels.
    pub fn channel_counts(&self) -> (usize, usize) {
        (self.n_start, self.n_stop)
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn tau_ps(&self, index: usize) -> f64 {
        (index as f64 - self.half_bins as f64) * self.bin_width_ps
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.tau_ps(i)).collect()
    }

    /// `len() + 1` edges, each half a bin from the neighbouring centers.
    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.len()).map(|i| self.tau_ps(i) - 0.5 * self.bin_width_ps).collect()
    }

    /// Index of the τ = 0 bin.
    pub fn zero_bin(&self) -> usize {
        self.half_bins
    }

    /// Sums counts of another histogram with the same binning, renormalizing
    /// by the combined accidental level.
    pub fn merge(&self, other: &CorrelationHistogram) -> Result<CorrelationHistogram> {
        if self.bin_width_ps != other.bin_width_ps || self.half_bins != other.half_bins {
            return Err(Error::invalid("histogram", "binning differs"));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(Self::from_counts(
            counts,
            self.bin_width_ps,
            self.accidental_level + other.accidental_level,
            self.n_start + other.n_start,
            self.n_stop + other.n_stop,
            self.duration_ps + other.duration_ps,
        ))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_ps,counts,g2,sigma\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_sig(self.tau_ps(i), 12),
                self.counts[i],
                fmt_sig(self.normalized[i], 9),
                fmt_sig(self.sigma[i], 9)
            ));
        }
        out
    }

    /// `key = value` lines describing the normalization.
    pub fn metadata_text(&self) -> String {
        let rate = |n: usize| n as f64 / self.duration_ps;
        format!(
            "bin_width_ps = {}\nmax_tau_ps = {}\nbins = {}\nduration_ps = {}\nclicks_d2 = {}\nclicks_d3 = {}\nrate_d2_per_ps = {:e}\nrate_d3_per_ps = {:e}\naccidental_level = {}\ntotal_coincidences = {}\nnormalization = counts / (clicks_d2 * clicks_d3 * bin_width_ps / duration_ps)\n",
            self.bin_width_ps,
            self.half_bins as f64 * self.bin_width_ps,
            self.len(),
            self.duration_ps,
            self.n_start,
            self.n_stop,
            rate(self.n_start),
            rate(self.n_stop),
            self.accidental_level,
            self.total_counts()
        )
    }
}

fn half_bins(bin_width_ps: f64, max_tau_ps: f64) -> Result<usize> {
    if !(bin_width_ps > 0.0 && bin_width_ps.is_finite()) {
        return Err(Error::invalid("bin_width_ps", format!("must be finite and > 0, got {bin_width_ps}")));
    }
    if !(max_tau_ps >= bin_width_ps && max_tau_ps.is_finite()) {
        return Err(Error::invalid(
            "max_tau_ps",
            format!("must be finite and >= bin width {bin_width_ps}, got {max_tau_ps}"),
        ));
    }
    let ratio = max_tau_ps / bin_width_ps;
    if ratio > MAX_HALF_BINS {
        return Err(Error::BinWidth {
            bin_width_ps,
            bins: ratio,
        });
    }
    // tolerate ratios like 6400/64 that land a hair below an integer
    Ok((ratio * (1.0 + 4.0 * f64::EPSILON)).floor() as usize)
}

/// Adds the delays `stop[j] − start[i]` to `counts`. When `skip_self` is set
/// the two slices are the same and `i == j` is skipped.
fn accumulate(start: &[f64], offset: usize, stop: &[f64], w: f64, k_max: usize, skip_self: bool, counts: &mut [u64]) {
    let reach = (k_max as f64 + 1.0) * w;
    let k_max = k_max as f64;
    let Some(&first) = start.first() else {
        return;
    };
    let mut lo = stop.partition_point(|&t| t < first - reach);
    for (i, &t) in start.iter().enumerate() {
        while lo < stop.len() && stop[lo] < t - reach {
            lo += 1;
        }
        let mut j = lo;
        while j < stop.len() && stop[j] <= t + reach {
            if !(skip_self && j == offset + i) {
                let k = ((stop[j] - t) / w).round();
                if k.abs() <= k_max {
                    counts[(k + k_max) as usize] += 1;
                }
            }
            j += 1;
        }
    }
}

fn histogram(start: &[f64], stop: &[f64], w: f64, k_max: usize, skip_self: bool) -> Vec<u64> {
    let bins = 2 * k_max + 1;
    start
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut counts = vec![0u64; bins];
            accumulate(chunk, c * CHUNK, stop, w, k_max, skip_self, &mut counts);
            counts
        })
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

fn check_sorted(times: &[f64], name: &'static str) -> Result<()> {
    if times.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid(name, "timestamps must be sorted and finite"));
    }
    Ok(())
}

/// Multi-stop cross-correlation of two sorted timestamp lists. Every start
/// click is paired with every stop click within ±`max_tau_ps`.
pub fn correlate_times(
    start: &[f64],
    stop: &[f64],
    duration_ps: f64,
    bin_width_ps: f64,
    max_tau_ps: f64,
) -> Result<CorrelationHistogram> {
    let k_max = half_bins(bin_width_ps, max_tau_ps)?;
    if start.is_empty() {
        return Err(Error::EmptyChannel("D2"));
    }
    if stop.is_empty() {
        return Err(Error::EmptyChannel("D3"));
    }
    if !(duration_ps > 0.0 && duration_ps.is_finite()) {
        return Err(Error::invalid("duration_ps", format!("must be finite and > 0, got {duration_ps}")));
    }
    check_sorted(start, "start")?;
    check_sorted(stop, "stop")?;
    let counts = histogram(start, stop, bin_width_ps, k_max, false);
    let accidental = start.len() as f64 * stop.len() as f64 * bin_width_ps / duration_ps;
    Ok(CorrelationHistogram::from_counts(
        counts,
        bin_width_ps,
        accidental,
        start.len(),
        stop.len(),
        duration_ps,
    ))
}

/// Histogram of τ = t(D3) − t(D2) over the stream.
pub fn correlate(s: &TimestampStream, bin_width_ps: f64, max_tau_ps: f64) -> Result<CorrelationHistogram> {
    correlate_times(
        &s.channel_times(Channel::D2),
        &s.channel_times(Channel::D3),
        s.duration_ps(),
        bin_width_ps,
        max_tau_ps,
    )
}

/// Autocorrelation of one timestamp list, excluding each click paired with
/// itself. Accidentals are N(N−1)·w/T.
pub fn autocorrelate(times: &[f64], duration_ps: f64, bin_width_ps: f64, max_tau_ps: f64) -> Result<CorrelationHistogram> {
    let k_max = half_bins(bin_width_ps, max_tau_ps)?;
    if times.len() < 2 {
        return Err(Error::EmptyChannel("autocorrelation input"));
    }
    if !(duration_ps > 0.0 && duration_ps.is_finite()) {
        return Err(Error::invalid("duration_ps", format!("must be finite and > 0, got {duration_ps}")));
    }
    check_sorted(times, "times")?;
    let counts = histogram(times, times, bin_width_ps, k_max, true);
    let n = times.len() as f64;
    Ok(CorrelationHistogram::from_counts(
        counts,
        bin_width_ps,
        n * (n - 1.0) * bin_width_ps / duration_ps,
        times.len(),
        times.len(),
        duration_ps,
    ))
}

/// Result of fitting `g² ≈ c − A·(1 − m̄)` to a histogram, where m̄ is the
/// model averaged over each bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipStatistics {
    /// Fitted g² at τ = 0.
    pub g2_zero: f64,
    pub g2_zero_stderr: f64,
    /// Fitted far-from-zero level.
    pub baseline: f64,
    /// Fitted dip depth relative to the model's.
    pub amplitude: f64,
    pub chi2_per_dof: f64,
    pub dof: usize,
}

/// Visibility of a paired measurement with first-order error propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedVisibility {
    pub visibility: f64,
    pub sigma: f64,
}

struct FitBin {
    model: f64,
    y: f64,
    sigma: f64,
}

fn fit_bins(h: &CorrelationHistogram, model: &CorrelationCurve) -> Result<Vec<FitBin>> {
    let (Some(&lo), Some(&hi)) = (model.tau_ps.first(), model.tau_ps.last()) else {
        return Err(Error::ModelRange { lo_ps: f64::NAN, hi_ps: f64::NAN });
    };
    let edges = h.bin_edges();
    let slack = 1e-9 * h.bin_width_ps;
    if edges[0] < lo - slack || edges[edges.len() - 1] > hi + slack {
        return Err(Error::ModelRange { lo_ps: lo, hi_ps: hi });
    }
    let mut bins = Vec::with_capacity(h.len());
    for i in 0..h.len() {
        if h.counts[i] == 0 {
            continue;
        }
        let a = edges[i].max(lo);
        let b = edges[i + 1].min(hi);
        let m = model.mean_over(a, b).ok_or(Error::ModelRange { lo_ps: lo, hi_ps: hi })?;
        bins.push(FitBin {
            model: m,
            y: h.normalized[i],
            sigma: h.sigma[i],
        });
    }
    if bins.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientBins {
            found: bins.len(),
            needed: MIN_FIT_BINS,
        });
    }
    Ok(bins)
}

/// Weighted least squares of the baseline and dip depth of `model` against
/// `h`. If the model is flat only the baseline is fitted.
pub fn dip_statistics(h: &CorrelationHistogram, model: &CorrelationCurve) -> Result<DipStatistics> {
    let bins = fit_bins(h, model)?;
    let m0 = model
        .value_at(0.0)
        .ok_or(Error::ModelRange { lo_ps: model.tau_ps[0], hi_ps: model.tau_ps[model.len() - 1] })?;

    // y = c + a·x with x = 1 − m̄; the reported amplitude is −a
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for b in &bins {
        let wt = 1.0 / (b.sigma * b.sigma);
        let x = 1.0 - b.model;
        s += wt;
        sx += wt * x;
        sxx += wt * x * x;
        sy += wt * b.y;
        sxy += wt * x * b.y;
    }
    let det = s * sxx - sx * sx;
    let spread = bins.iter().map(|b| b.model).fold(f64::NEG_INFINITY, f64::max)
        - bins.iter().map(|b| b.model).fold(f64::INFINITY, f64::min);
    let flat = spread < 1e-9 || det <= 1e-12 * s * sxx;

    let (c, a, var_c, var_a, cov) = if flat {
        (sy / s, 0.0, 1.0 / s, 0.0, 0.0)
    } else {
        let c = (sxx * sy - sx * sxy) / det;
        let a = (s * sxy - sx * sy) / det;
        (c, a, sxx / det, s / det, -sx / det)
    };
    if !(c.is_finite() && a.is_finite()) {
        return Err(Error::NonConvergence("dip fit produced non-finite parameters".into()));
    }
    let free = if flat { 1 } else { 2 };
    let dof = bins.len() - free;
    let chi2: f64 = bins
        .iter()
        .map(|b| {
            let r = (b.y - c - a * (1.0 - b.model)) / b.sigma;
            r * r
        })
        .sum();
    let x0 = 1.0 - m0;
    let var0 = var_c + x0 * x0 * var_a + 2.0 * x0 * cov;
    Ok(DipStatistics {
        g2_zero: c + a * x0,
        g2_zero_stderr: var0.max(0.0).sqrt(),
        baseline: c,
        amplitude: -a,
        chi2_per_dof: chi2 / dof as f64,
        dof,
    })
}

/// χ²/dof of the histogram against the model with no free parameters.
pub fn chi2_against(h: &CorrelationHistogram, model: &CorrelationCurve) -> Result<f64> {
    let bins = fit_bins(h, model)?;
    let chi2: f64 = bins
        .iter()
        .map(|b| {
            let r = (b.y - b.model) / b.sigma;
            r * r
        })
        .sum();
    Ok(chi2 / bins.len() as f64)
}

/// (g²⊥(0) − g²∥(0)) / g²⊥(0) from independent parallel and orthogonal
/// measurements.
pub fn paired_visibility(parallel: &DipStatistics, orthogonal: &DipStatistics) -> Result<PairedVisibility> {
    let (gp, go) = (parallel.g2_zero, orthogonal.g2_zero);
    if go == 0.0 {
        return Err(Error::DivisionByZero("orthogonal g2(0)"));
    }
    let d_par = parallel.g2_zero_stderr / go;
    let d_orth = gp * orthogonal.g2_zero_stderr / (go * go);
    Ok(PairedVisibility {
        visibility: (go - gp) / go,
        sigma: (d_par * d_par + d_orth * d_orth).sqrt(),
    })
}
