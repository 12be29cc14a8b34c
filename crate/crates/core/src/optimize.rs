//! Small numerical optimizers: bounded golden-section search and damped
//! least squares with finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section minimization of `f` on `[lo, hi]`. Assumes `f` is
/// unimodal on the interval; otherwise a local minimum is returned.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, x_tol: f64) -> Result<ScalarMinimum> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("interval", format!("[{lo}, {hi}] is empty")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while b - a > x_tol {
        iterations += 1;
        if iterations > 500 {
            return Err(Error::NonConvergence(format!(
                "golden section stalled at [{a}, {b}]"
            )));
        }
        if !(fc.is_finite() && fd.is_finite()) {
            return Err(Error::NonConvergence("objective is not finite".into()));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    // the end points are candidates as well, so boundary optima are reported exactly
    let mut best = ScalarMinimum {
        x: 0.5 * (a + b),
        value: f(0.5 * (a + b)),
        iterations,
    };
    for x in [lo, hi] {
        let v = f(x);
        if v < best.value {
            best = ScalarMinimum { x, value: v, iterations };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    /// (JᵀJ)⁻¹ at the solution, if J has full column rank.
    pub inverse_hessian: Option<DMatrix<f64>>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative change in cost considered converged.
    pub tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            tolerance: 1e-14,
            initial_damping: 1e-3,
        }
    }
}

fn jacobian(
    residuals: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    r0: &[f64],
) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let step = 1e-7 * x[k].abs().max(1e-3);
        xp[k] = x[k] + step;
        let rp = residuals(&xp);
        xp[k] = x[k] - step;
        let rm = residuals(&xp);
        xp[k] = x[k];
        for i in 0..r0.len() {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * step);
        }
    }
    j
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg–Marquardt on a residual function with central-difference
/// derivatives.
pub fn levenberg_marquardt(
    residuals: impl Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    opts: LmOptions,
) -> Result<LeastSquaresFit> {
    let residuals: &dyn Fn(&[f64]) -> Vec<f64> = &residuals;
    let mut x = x0.to_vec();
    let mut r = residuals(&x);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::NonConvergence("initial residuals are not finite".into()));
    }
    let mut lambda = opts.initial_damping;
    let n = x.len();

    for iteration in 1..=opts.max_iterations {
        let j = jacobian(residuals, &x, &r);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);

        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&trial);
            let ct = sum_sq(&rt);
            if ct.is_finite() && ct <= cost {
                let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < opts.tolerance || cost == 0.0 {
                    return Ok(finish(residuals, x, r, cost, iteration));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: at a (numerical) minimum
            return Ok(finish(residuals, x, r, cost, iteration));
        }
    }
    Err(Error::NonConvergence(format!(
        "no convergence after {} iterations",
        opts.max_iterations
    )))
}

fn finish(
    residuals: &dyn Fn(&[f64]) -> Vec<f64>,
    x: Vec<f64>,
    r: Vec<f64>,
    cost: f64,
    iterations: usize,
) -> LeastSquaresFit {
    let j = jacobian(residuals, &x, &r);
    let inverse_hessian = (j.transpose() * &j).try_inverse();
    LeastSquaresFit {
        params: x,
        cost,
        inverse_hessian,
        iterations,
    }
}
