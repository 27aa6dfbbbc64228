//! Ramsey-fringe fitting.

use crate::fit::{levenberg_marquardt, LmOptions};
use crate::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RamseyFit {
    /// MHz, ≥ 0
    pub freq: f64,
    /// μs; infinite when no decay is resolved
    pub decay_time: f64,
    /// radians
    pub phase: f64,
    /// root-mean-square residual
    pub rms: f64,
}

/// P(t) = ½(1 + e^{−γt}·cos(2πft + φ))
pub fn ramsey_model(t: f64, freq: f64, rate: f64, phase: f64) -> f64 {
    0.5 * (1.0 + (-rate * t).exp() * (2.0 * PI * freq * t + phase).cos())
}

/// Frequency of the largest |Σ (P − P̄) e^{−i2πft}| on a grid up to the Nyquist
/// frequency of the smallest time step.
fn spectral_peak(t: &[f64], p: &[f64]) -> (f64, f64) {
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let span = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_dt = t.windows(2).map(|w| (w[1] - w[0]).abs()).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let nyquist = 0.5 / min_dt;
    let df = 0.1 / span;
    let steps = (nyquist / df).ceil() as usize;
    let mut best = (0.0, 0.0, 0.0);
    for k in 1..=steps {
        let f = k as f64 * df;
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &pi) in t.iter().zip(p) {
            let (s, c) = (2.0 * PI * f * ti).sin_cos();
            re += (pi - mean) * c;
            im -= (pi - mean) * s;
        }
        let mag = re * re + im * im;
        if mag > best.0 {
            best = (mag, f, im.atan2(re));
        }
    }
    (best.1, best.2)
}

/// Least-squares fit of ½(1 + e^{−t/τ}cos(2πft + φ)) seeded from the spectral peak.
pub fn fit_ramsey(t: &[f64], p: &[f64]) -> Result<RamseyFit> {
    if t.len() != p.len() || t.len() < 8 {
        return Err(Error::InsufficientData(format!("Ramsey fit needs >= 8 points, got {}", t.len())));
    }
    let span = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min);
    let (f0, phi0) = spectral_peak(t, p);
    if f0 * span < 1.0 {
        return Err(Error::InsufficientData(format!("Ramsey data span {span} μs covers less than one fringe")));
    }
    let residuals = |q: &[f64]| t.iter().zip(p).map(|(&ti, &pi)| ramsey_model(ti, q[0], q[1], q[2]) - pi).collect::<Vec<_>>();
    let mut best: Option<(f64, Vec<f64>)> = None;
    // a few decay seeds keeps the fit out of the flat no-contrast valley
    for rate0 in [0.1 / span, 1.0 / span, 3.0 / span] {
        if let Ok(r) = levenberg_marquardt(residuals, &[f0, rate0, phi0], LmOptions::default()) {
            if best.as_ref().is_none_or(|b| r.cost < b.0) {
                best = Some((r.cost, r.params));
            }
        }
    }
    let (cost, q) = best.ok_or_else(|| Error::FitFailure("Ramsey fit did not converge".into()))?;
    let (mut f, rate, mut phase) = (q[0], q[1], q[2]);
    if f < 0.0 {
        f = -f;
        phase = -phase;
    }
    phase = (phase + PI).rem_euclid(2.0 * PI) - PI;
    Ok(RamseyFit {
        freq: f,
        decay_time: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
        phase,
        rms: (2.0 * cost / t.len() as f64).sqrt(),
    })
}
