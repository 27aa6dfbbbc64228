//! Levenberg–Marquardt least squares with a finite-difference Jacobian.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// relative cost-reduction tolerance
    pub ftol: f64,
    /// relative step tolerance
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-15,
            xtol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// ½Σr²
    pub cost: f64,
    pub iterations: usize,
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

fn jacobian<F>(f: &F, p: &[f64], r0: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = r0.len();
    let n = p.len();
    let mut j = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    for k in 0..n {
        let h = 1e-7 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let rp = f(&q);
        q[k] = p[k] - h;
        let rm = f(&q);
        q[k] = p[k];
        for i in 0..m {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    j
}

/// Minimizes ½‖r(p)‖² starting from `p0`.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], opts: LmOptions) -> Result<LmResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    if r.len() < n {
        return Err(Error::InsufficientData(format!("{} residuals for {} parameters", r.len(), n)));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::FitFailure("non-finite residuals at the initial guess".into()));
    }
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for it in 0..opts.max_iterations {
        let j = jacobian(&residuals, &p, &r);
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() < 1e-300 {
            return Ok(LmResult { params: p, cost: c, iterations: it });
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let step_norm = step.norm();
                let p_norm = DVector::from_column_slice(&p).norm();
                let reduction = (c - ct) / c.max(1e-300);
                p = trial;
                r = rt;
                let done = reduction < opts.ftol || step_norm < opts.xtol * (p_norm + opts.xtol);
                c = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if done {
                    return Ok(LmResult { params: p, cost: c, iterations: it + 1 });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a local minimum to working precision
            return Ok(LmResult { params: p, cost: c, iterations: it + 1 });
        }
    }
    Err(Error::FitFailure(format!(
        "Levenberg-Marquardt did not converge in {} iterations (cost {c:e})",
        opts.max_iterations
    )))
}

/// Ordinary least-squares line; returns (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData("linear fit needs at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("linear fit abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-t / 1.7).exp() + 0.3).collect();
        let f = |p: &[f64]| t.iter().zip(&y).map(|(t, y)| p[0] * (-t / p[1]).exp() + p[2] - y).collect::<Vec<_>>();
        let r = levenberg_marquardt(f, &[1.0, 1.0, 0.0], LmOptions::default()).unwrap();
        assert!((r.params[0] - 2.5).abs() < 1e-8);
        assert!((r.params[1] - 1.7).abs() < 1e-8);
        assert!((r.params[2] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]];
        let r = levenberg_marquardt(f, &[-1.2, 1.0], LmOptions::default()).unwrap();
        assert!((r.params[0] - 1.0).abs() < 1e-6 && (r.params[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn line() {
        let (m, b) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
