//! Gaussian smoothing of sampled functions.
//!
//! Samples are joined by linear interpolation and the interpolant is
//! integrated exactly against the Gaussian, so each node carries the weight
//! of a hat function rather than a point sample. A kink at a node (the
//! `|τ|` cusp at zero) is then reproduced without the first-order error a
//! point-sampled sum would make.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Half-width of the kernel support, in standard deviations.
pub(crate) const KERNEL_HALF_WIDTH_SIGMAS: f64 = 8.0;

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// ∫_a^b N(x; mean, σ) dx and ∫_a^b x·N(x; mean, σ) dx.
fn moments(a: f64, b: f64, mean: f64, sigma: f64) -> (f64, f64) {
    let m0 = normal_cdf((b - mean) / sigma) - normal_cdf((a - mean) / sigma);
    let m1 = mean * m0 + sigma * sigma * (normal_pdf(a - mean, sigma) - normal_pdf(b - mean, sigma));
    (m0, m1)
}

/// Weight of a unit hat of half-width `h` centred at the origin when the
/// Gaussian is centred at `offset`.
pub(crate) fn hat_weight(offset: f64, h: f64, sigma: f64) -> f64 {
    let (l0, l1) = moments(-h, 0.0, offset, sigma);
    let (r0, r1) = moments(0.0, h, offset, sigma);
    (l0 + l1 / h) + (r0 - r1 / h)
}

/// Symmetric hat-weight kernel for a grid of step `h`, indices -j..=j.
pub(crate) fn kernel(h: f64, sigma: f64) -> Vec<f64> {
    let half = (KERNEL_HALF_WIDTH_SIGMAS * sigma / h).ceil() as i64 + 1;
    (-half..=half).map(|j| hat_weight(j as f64 * h, h, sigma)).collect()
}

/// (f ⊗ N(0, σ))(tau), with `f` sampled on the lattice `k·h` (which contains
/// zero, where the model functions have their cusp).
pub(crate) fn smooth_at(f: impl Fn(f64) -> f64, tau: f64, sigma: f64, h: f64) -> f64 {
    if sigma == 0.0 {
        return f(tau);
    }
    let reach = KERNEL_HALF_WIDTH_SIGMAS * sigma;
    let k_lo = ((tau - reach) / h).floor() as i64 - 1;
    let k_hi = ((tau + reach) / h).ceil() as i64 + 1;
    let mut acc = 0.0;
    let mut norm = 0.0;
    for k in k_lo..=k_hi {
        let u = k as f64 * h;
        let w = hat_weight(tau - u, h, sigma);
        acc += w * f(u);
        norm += w;
    }
    acc / norm
}

/// Discrete convolution of uniformly sampled `values` (step `h`) with the
/// hat-weight kernel. Samples beyond either end are taken equal to the end
/// value.
pub(crate) fn smooth_samples(values: &[f64], h: f64, sigma: f64) -> Vec<f64> {
    let w = kernel(h, sigma);
    let half = (w.len() / 2) as i64;
    let norm: f64 = w.iter().sum();
    let n = values.len() as i64;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (jj, wj) in w.iter().enumerate() {
                let src = (i - (jj as i64 - half)).clamp(0, n - 1);
                acc += wj * values[src as usize];
            }
            acc / norm
        })
        .collect()
}
