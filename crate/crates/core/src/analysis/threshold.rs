use super::mixture::DoubleGaussianFit;
use serde::Serialize;
use statrs::function::erf::erfc;
use std::f64::consts::SQRT_2;

const SCAN_POINTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Discrimination {
    pub threshold: f64,
    /// P(x > t | ground component)
    pub err_g_as_e: f64,
    /// P(x < t | excited component)
    pub err_e_as_g: f64,
    /// 1 − ½(err_g_as_e + err_e_as_g)
    pub fidelity: f64,
    /// 1 − err_g_as_e − err_e_as_g
    pub fidelity_alt: f64,
}

/// P(X > t) for X ~ N(μ, σ²)
pub fn upper_tail(t: f64, mu: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if t < mu { 1.0 } else if t > mu { 0.0 } else { 0.5 };
    }
    0.5 * erfc((t - mu) / (sigma * SQRT_2))
}

/// P(X < t) for X ~ N(μ, σ²)
pub fn lower_tail(t: f64, mu: f64, sigma: f64) -> f64 {
    upper_tail(-t, -mu, sigma)
}

pub fn discrimination_at(threshold: f64, mu0: f64, s0: f64, mu1: f64, s1: f64) -> Discrimination {
    let err_g_as_e = upper_tail(threshold, mu0, s0);
    let err_e_as_g = lower_tail(threshold, mu1, s1);
    Discrimination {
        threshold,
        err_g_as_e,
        err_e_as_g,
        fidelity: 1.0 - 0.5 * (err_g_as_e + err_e_as_g),
        fidelity_alt: 1.0 - err_g_as_e - err_e_as_g,
    }
}

/// Root in [μ0, μ1] of w0·N(x; μ0, σ0) = w1·N(x; μ1, σ1).
fn intersection(f: &DoubleGaussianFit) -> Option<f64> {
    let (w0, w1, m0, m1, s0, s1) = (f.w0, f.w1, f.mu0, f.mu1, f.sigma0, f.sigma1);
    if !(w0 > 0.0 && w1 > 0.0 && s0 > 0.0 && s1 > 0.0) {
        return None;
    }
    let a = 0.5 / (s1 * s1) - 0.5 / (s0 * s0);
    let b = m0 / (s0 * s0) - m1 / (s1 * s1);
    let c = 0.5 * m1 * m1 / (s1 * s1) - 0.5 * m0 * m0 / (s0 * s0) + (w0 * s1 / (w1 * s0)).ln();
    let inside = |x: f64| x.is_finite() && x >= m0 && x <= m1;
    let scale = (b * b).max((a * c).abs());
    if (s0 - s1).abs() <= 1e-12 * s0.max(s1) {
        let x = -c / b;
        return inside(x).then_some(x);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < -1e-12 * scale {
        return None;
    }
    let sq = disc.max(0.0).sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    [q / a, c / q].into_iter().find(|&x| inside(x))
}

/// Minimizes w0·P(x>t|0) + w1·P(x<t|1) on a uniform grid.
fn scan(f: &DoubleGaussianFit) -> f64 {
    let smax = f.sigma0.max(f.sigma1);
    let lo = f.mu0.min(f.mu1) - 5.0 * smax;
    let hi = f.mu0.max(f.mu1) + 5.0 * smax;
    let mut best = (f64::INFINITY, 0.5 * (f.mu0 + f.mu1));
    for i in 0..SCAN_POINTS {
        let t = lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64;
        let cost = f.w0 * upper_tail(t, f.mu0, f.sigma0) + f.w1 * lower_tail(t, f.mu1, f.sigma1);
        if cost < best.0 {
            best = (cost, t);
        }
    }
    best.1
}

/// Threshold at the weighted-density intersection between the two means,
/// with a grid scan when no such root exists.
pub fn choose_threshold(fit: &DoubleGaussianFit) -> Discrimination {
    let t = if fit.mu0 == fit.mu1 {
        fit.mu0
    } else {
        intersection(fit).unwrap_or_else(|| scan(fit))
    };
    discrimination_at(t, fit.mu0, fit.sigma0, fit.mu1, fit.sigma1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(w0: f64, m0: f64, s0: f64, m1: f64, s1: f64) -> DoubleGaussianFit {
        DoubleGaussianFit::from_components(w0, m0, s0, m1, s1)
    }

    /// Upper standard-normal tail by Simpson quadrature, independent of erfc.
    fn tail_by_quadrature(z: f64) -> f64 {
        // ∫_z^{z+12} φ(x) dx, Simpson with 20000 panels
        let n = 20_000;
        let h = 12.0 / n as f64;
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = phi(z) + phi(z + 12.0);
        for i in 1..n {
            let x = z + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(x);
        }
        s * h / 3.0
    }

    #[test]
    fn equal_sigma_six_sigma_separation() {
        let d = choose_threshold(&fit(0.5, 0.0, 1.0, 6.0, 1.0));
        assert!((d.threshold - 3.0).abs() < 1e-12);
        let tail = tail_by_quadrature(3.0);
        assert!((tail - 1.349898e-3).abs() < 1e-8);
        assert!((d.err_g_as_e - tail).abs() < 1e-10);
        assert!((d.err_e_as_g - tail).abs() < 1e-10);
        assert!((d.fidelity - (1.0 - tail)).abs() < 1e-6);
        assert!((d.fidelity - 0.99865).abs() < 1e-5);
    }

    #[test]
    fn identical_means() {
        let d = choose_threshold(&fit(0.5, 1.0, 1.0, 1.0, 1.0));
        assert!(d.fidelity_alt.abs() < 1e-12);
        assert!((d.fidelity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn heavier_ground_weight_pushes_threshold_up() {
        let s = 1.0;
        let d = choose_threshold(&fit(0.9, 0.0, s, 4.0, s));
        // w0 e^{−t²/2} = w1 e^{−(t−4)²/2}  ⇒  t = 2 + ln(w0/w1)/4
        let oracle = 2.0 + (0.9f64 / 0.1).ln() / 4.0;
        assert!((d.threshold - oracle).abs() < 1e-12);
        assert!(d.threshold > 2.0);
    }

    #[test]
    fn unequal_sigma_matches_scan() {
        let f = fit(0.5, 0.0, 0.5, 3.0, 1.5);
        let d = choose_threshold(&f);
        let t = scan(&f);
        assert!((d.threshold - t).abs() < 2e-3);
        // density equality at the root
        let pdf = |x: f64, m: f64, s: f64| (-(x - m) * (x - m) / (2.0 * s * s)).exp() / s;
        assert!((pdf(d.threshold, 0.0, 0.5) - pdf(d.threshold, 3.0, 1.5)).abs() < 1e-10);
    }

    #[test]
    fn affine_invariance() {
        let base = choose_threshold(&fit(0.6, -1.0, 0.8, 2.5, 1.1));
        let (a, b) = (3.7, -12.0);
        let moved = choose_threshold(&fit(0.6, b - a, a * 0.8, a * 2.5 + b, a * 1.1));
        assert!((moved.threshold - (a * base.threshold + b)).abs() < 1e-9);
        assert!((moved.fidelity - base.fidelity).abs() < 1e-12);
    }
}
