//! Small statistical helpers.

use serde::Serialize;

/// z for a two-sided 99% normal interval.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Linear-interpolated quantile of already sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Wilson score interval for k successes in n trials.
pub fn binomial_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Asymptotic Kolmogorov survival function P(K > λ).
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    // the alternating series is slow below 0.2, where the survival is 1 to 1e-12 anyway
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100u32 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = 2.0 * sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    /// Asymptotic critical value of D at α = 0.01.
    pub fn critical_01(&self) -> f64 {
        1.628 / (self.n as f64).sqrt()
    }

    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sn = nf.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n,
    }
}

/// KS test for samples on the lattice {k·step} against a lattice law with
/// CDF `cdf(k·step)` at each node.
///
/// Both ECDF and model are step functions on the same lattice, so the supremum
/// is taken node by node up to the largest sample.
pub fn ks_lattice<F: Fn(f64) -> f64>(samples: &[f64], step: f64, cdf: F) -> KsResult {
    let n = samples.len();
    let idx: Vec<usize> = samples.iter().map(|&x| (x / step).round().max(0.0) as usize).collect();
    let kmax = idx.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; kmax + 1];
    idx.iter().for_each(|&k| counts[k] += 1);
    let nf = n.max(1) as f64;
    let (mut cum, mut d) = (0usize, 0.0f64);
    for (k, c) in counts.iter().enumerate() {
        cum += c;
        d = d.max((cum as f64 / nf - cdf(k as f64 * step)).abs());
    }
    let sn = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d),
        n,
    }
}

/// KS against Exp(mean) truncated to [0, window).
pub fn ks_exponential(samples: &[f64], mean: f64, window: f64) -> KsResult {
    let norm = if window.is_finite() { 1.0 - (-window / mean).exp() } else { 1.0 };
    ks_test(samples, |t| ((1.0 - (-t.max(0.0) / mean).exp()) / norm).min(1.0))
}

/// Mean of Exp(τ) truncated to [0, W): τ − W/(e^{W/τ} − 1).
pub fn truncated_exponential_mean(tau: f64, window: f64) -> f64 {
    if !window.is_finite() {
        return tau;
    }
    tau - window / ((window / tau).exp() - 1.0)
}

/// Solves `truncated_exponential_mean(τ, W) = m` for τ by bisection.
pub fn truncated_exponential_tau(m: f64, window: f64) -> f64 {
    if !window.is_finite() || m <= 0.0 || m >= window / 2.0 {
        return m;
    }
    let (mut lo, mut hi) = (m, 1e6 * window.max(m));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_exponential_mean(mid, window) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts_g: Vec<u64>,
    pub counts_e: Vec<u64>,
}

/// Shared-bin histograms of the two prepared-state ensembles.
pub fn histogram(g: &[f64], e: &[f64], bins: usize) -> Histogram {
    let all = g.iter().chain(e);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let idx = |v: f64| (((v - lo) / width) as usize).min(bins - 1);
    let mut counts_g = vec![0; bins];
    let mut counts_e = vec![0; bins];
    g.iter().for_each(|&v| counts_g[idx(v)] += 1);
    e.iter().for_each(|&v| counts_e[idx(v)] += 1);
    Histogram {
        centers: (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect(),
        counts_g,
        counts_e,
    }
}
