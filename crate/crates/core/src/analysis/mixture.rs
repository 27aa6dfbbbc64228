//! Two-component Gaussian mixture by expectation–maximization.

use super::stats::quantile;
use super::threshold::{choose_threshold, Discrimination};
use crate::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

pub const MIN_SAMPLES: usize = 1000;
const MAX_ITERATIONS: usize = 500;
const TOLERANCE_PER_SAMPLE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoubleGaussianFit {
    pub w0: f64,
    pub w1: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub threshold: f64,
    pub err_g_as_e: f64,
    pub err_e_as_g: f64,
    pub fidelity: f64,
    pub fidelity_alt: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// true when a single Gaussian explains the data better (by BIC)
    pub single_component: bool,
    #[serde(skip)]
    pub log_likelihood_history: Vec<f64>,
}

impl DoubleGaussianFit {
    /// A fit with the given components and the threshold fields filled in.
    pub fn from_components(w0: f64, mu0: f64, sigma0: f64, mu1: f64, sigma1: f64) -> Self {
        let mut f = Self {
            w0,
            w1: 1.0 - w0,
            mu0,
            mu1,
            sigma0,
            sigma1,
            threshold: 0.0,
            err_g_as_e: 0.0,
            err_e_as_g: 0.0,
            fidelity: 0.0,
            fidelity_alt: 0.0,
            log_likelihood: f64::NAN,
            iterations: 0,
            single_component: false,
            log_likelihood_history: Vec::new(),
        };
        f.apply(choose_threshold(&f));
        f
    }

    fn apply(&mut self, d: Discrimination) {
        self.threshold = d.threshold;
        self.err_g_as_e = d.err_g_as_e;
        self.err_e_as_g = d.err_e_as_g;
        self.fidelity = d.fidelity;
        self.fidelity_alt = d.fidelity_alt;
    }

    pub fn discrimination(&self) -> Discrimination {
        Discrimination {
            threshold: self.threshold,
            err_g_as_e: self.err_g_as_e,
            err_e_as_g: self.err_e_as_g,
            fidelity: self.fidelity,
            fidelity_alt: self.fidelity_alt,
        }
    }
}

#[inline]
fn log_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

/// log(e^a + e^b)
#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Clone, Copy)]
struct Params {
    w: [f64; 2],
    mu: [f64; 2],
    sigma: [f64; 2],
}

fn log_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// One E+M pass; returns the updated parameters and the log-likelihood of the input ones.
fn em_step(x: &[f64], p: &Params) -> (Params, f64) {
    let lw = [log_weight(p.w[0]), log_weight(p.w[1])];
    let mut ll = 0.0;
    let mut sr = [0.0; 2];
    let mut sx = [0.0; 2];
    for &v in x {
        let a = lw[0] + log_normal_pdf(v, p.mu[0], p.sigma[0]);
        let b = lw[1] + log_normal_pdf(v, p.mu[1], p.sigma[1]);
        let l = log_add(a, b);
        ll += l;
        let r1 = (b - l).exp();
        sr[1] += r1;
        sr[0] += 1.0 - r1;
        sx[1] += r1 * v;
        sx[0] += (1.0 - r1) * v;
    }
    let mu = [sx[0] / sr[0].max(1e-300), sx[1] / sr[1].max(1e-300)];
    let mut sq = [0.0; 2];
    for &v in x {
        let a = lw[0] + log_normal_pdf(v, p.mu[0], p.sigma[0]);
        let b = lw[1] + log_normal_pdf(v, p.mu[1], p.sigma[1]);
        let r1 = (b - log_add(a, b)).exp();
        sq[1] += r1 * (v - mu[1]) * (v - mu[1]);
        sq[0] += (1.0 - r1) * (v - mu[0]) * (v - mu[0]);
    }
    let n = x.len() as f64;
    let next = Params {
        w: [sr[0] / n, sr[1] / n],
        mu,
        sigma: [(sq[0] / sr[0].max(1e-300)).sqrt(), (sq[1] / sr[1].max(1e-300)).sqrt()],
    };
    (next, ll)
}

fn log_likelihood(x: &[f64], p: &Params) -> f64 {
    let lw = [log_weight(p.w[0]), log_weight(p.w[1])];
    x.iter()
        .map(|&v| log_add(lw[0] + log_normal_pdf(v, p.mu[0], p.sigma[0]), lw[1] + log_normal_pdf(v, p.mu[1], p.sigma[1])))
        .sum()
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Maximum-likelihood two-Gaussian mixture, canonically ordered μ0 ≤ μ1.
///
/// When a single Gaussian is preferred by BIC both components are set to it,
/// with all weight on component 0.
pub fn fit_double_gaussian(values: &[f64]) -> Result<DoubleGaussianFit> {
    let n = values.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!("mixture fit needs >= {MIN_SAMPLES} samples, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("non-finite sample in mixture input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[n - 1] - sorted[0];
    let collapsed = |sigma: f64| Error::CollapsedComponent { sigma, range };

    let (m, s) = mean_sd(values);
    if !(s > 1e-12 * range) || range == 0.0 {
        return Err(collapsed(s));
    }
    let half = n / 2;
    let (_, s_lo) = mean_sd(&sorted[..half]);
    let (_, s_hi) = mean_sd(&sorted[half..]);
    let mut p = Params {
        w: [0.5, 0.5],
        mu: [quantile(&sorted, 0.25), quantile(&sorted, 0.75)],
        sigma: [s_lo.max(1e-3 * s), s_hi.max(1e-3 * s)],
    };

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITERATIONS {
        let (next, ll) = em_step(values, &p);
        history.push(ll);
        iterations = it + 1;
        if let Some(&prev) = history.iter().rev().nth(1) {
            debug_assert!(ll >= prev - 1e-9 * n as f64, "EM log-likelihood decreased: {prev} -> {ll}");
            if (ll - prev) / (n as f64) < TOLERANCE_PER_SAMPLE {
                converged = true;
                break;
            }
        }
        for k in 0..2 {
            if next.w[k] > 0.0 && !(next.sigma[k] >= 1e-12 * range) {
                return Err(collapsed(next.sigma[k]));
            }
        }
        p = next;
    }
    let ll2 = log_likelihood(values, &p);
    history.push(ll2);

    let ll1 = -0.5 * n as f64 * ((2.0 * PI * s * s).ln() + 1.0);
    let ln_n = (n as f64).ln();
    let bic1 = 2.0 * ln_n - 2.0 * ll1;
    let bic2 = 5.0 * ln_n - 2.0 * ll2;
    if bic1 <= bic2 {
        let mut f = DoubleGaussianFit::from_components(1.0, m, s, m, s);
        f.log_likelihood = ll1;
        f.iterations = iterations;
        f.single_component = true;
        f.log_likelihood_history = history;
        return Ok(f);
    }
    if !converged {
        return Err(Error::FitFailure(format!(
            "EM did not converge in {MAX_ITERATIONS} iterations (w = {:?}, μ = {:?}, σ = {:?})",
            p.w, p.mu, p.sigma
        )));
    }
    if p.mu[0] > p.mu[1] {
        p.w.swap(0, 1);
        p.mu.swap(0, 1);
        p.sigma.swap(0, 1);
    }
    let mut f = DoubleGaussianFit::from_components(p.w[0], p.mu[0], p.sigma[0], p.mu[1], p.sigma[1]);
    f.w1 = p.w[1];
    f.log_likelihood = ll2;
    f.iterations = iterations;
    f.log_likelihood_history = history;
    Ok(f)
}

/// Mixture weights of `values` with both components held fixed.
pub fn fit_weights(values: &[f64], fit: &DoubleGaussianFit) -> [f64; 2] {
    if values.is_empty() {
        return [fit.w0, fit.w1];
    }
    if fit.single_component || fit.mu0 == fit.mu1 {
        return [1.0, 0.0];
    }
    let l: Vec<(f64, f64)> = values
        .iter()
        .map(|&v| (log_normal_pdf(v, fit.mu0, fit.sigma0), log_normal_pdf(v, fit.mu1, fit.sigma1)))
        .collect();
    let mut w = 0.5;
    for _ in 0..MAX_ITERATIONS {
        let (lw0, lw1) = (log_weight(1.0 - w), log_weight(w));
        let next = l
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (lw0 + a, lw1 + b);
                (b - log_add(a, b)).exp()
            })
            .sum::<f64>()
            / values.len() as f64;
        let done = (next - w).abs() < 1e-12;
        w = next;
        if done {
            break;
        }
    }
    [1.0 - w, w]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn mixture(n: usize, w0: f64, m: [f64; 2], s: [f64; 2], seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let k = if rng.gen::<f64>() < w0 { 0 } else { 1 };
                let z: f64 = rng.sample(StandardNormal);
                m[k] + s[k] * z
            })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn recovers_balanced_mixture() {
        let x = mixture(300_000, 0.5, [0.0, 6.0], [1.0, 1.0], 31);
        let f = fit_double_gaussian(&x).unwrap();
        assert!(rel(f.w0, 0.5) < 0.02 && rel(f.w1, 0.5) < 0.02);
        assert!(f.mu0.abs() < 0.02 && rel(f.mu1, 6.0) < 0.02);
        assert!(rel(f.sigma0, 1.0) < 0.02 && rel(f.sigma1, 1.0) < 0.02);
        assert!(f.log_likelihood_history.windows(2).all(|w| w[1] >= w[0] - 1e-9 * x.len() as f64));
    }

    #[test]
    fn recovers_unbalanced_mixture() {
        let x = mixture(300_000, 0.7, [-2.0, 3.0], [0.8, 1.3], 32);
        let f = fit_double_gaussian(&x).unwrap();
        assert!(rel(f.w0, 0.7) < 0.02 && rel(f.w1, 0.3) < 0.02);
        assert!(rel(f.mu0, -2.0) < 0.02 && rel(f.mu1, 3.0) < 0.02);
        assert!(rel(f.sigma0, 0.8) < 0.02 && rel(f.sigma1, 1.3) < 0.02);
    }

    #[test]
    fn canonical_order() {
        let x = mixture(20_000, 0.2, [5.0, -5.0], [1.0, 0.5], 33);
        let f = fit_double_gaussian(&x).unwrap();
        assert!(f.mu0 < f.mu1);
        assert!(rel(f.w1, 0.2) < 0.05);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let x = mixture(50_000, 0.5, [0.0, 2.0], [1.0, 0.7], 34);
        let f = fit_double_gaussian(&x).unwrap();
        let h = &f.log_likelihood_history;
        assert!(h.len() > 2);
        for w in h.windows(2) {
            assert!(w[1] >= w[0] - 1e-7, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_gaussian_takes_all_weight() {
        let x = mixture(100_000, 1.0, [1.5, 0.0], [0.4, 1.0], 35);
        let f = fit_double_gaussian(&x).unwrap();
        assert!(f.w0.max(f.w1) > 0.98);
        assert!(f.w0.min(f.w1) < 0.02);
        assert!(f.fidelity_alt.abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(fit_double_gaussian(&[0.0; 10]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn point_masses_collapse() {
        let x: Vec<f64> = (0..2000).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        assert!(matches!(fit_double_gaussian(&x), Err(Error::CollapsedComponent { .. })));
        assert!(matches!(fit_double_gaussian(&[3.0; 2000]), Err(Error::CollapsedComponent { .. })));
    }

    #[test]
    fn fixed_component_weights() {
        let f = DoubleGaussianFit::from_components(0.5, 0.0, 1.0, 6.0, 1.0);
        let x = mixture(100_000, 0.9, [0.0, 6.0], [1.0, 1.0], 36);
        let w = fit_weights(&x, &f);
        assert!((w[0] - 0.9).abs() < 0.005);
    }

    #[test]
    fn affine_transform_leaves_fidelity() {
        let x = mixture(50_000, 0.5, [0.0, 3.0], [1.0, 1.0], 37);
        let y: Vec<f64> = x.iter().map(|v| -4.0 + 2.5 * v).collect();
        let a = fit_double_gaussian(&x).unwrap();
        let b = fit_double_gaussian(&y).unwrap();
        assert!((a.fidelity - b.fidelity).abs() < 1e-6);
        assert!((b.threshold - (-4.0 + 2.5 * a.threshold)).abs() < 1e-5);
    }
}
