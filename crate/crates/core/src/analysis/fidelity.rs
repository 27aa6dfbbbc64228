//! Per-channel single-shot fidelity from prepared-state ensembles.

use super::mixture::{fit_double_gaussian, fit_weights, DoubleGaussianFit};
use super::threshold::{lower_tail, upper_tail};
use crate::params::QubitState;
use crate::qubit::TrajectoryRecord;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq)]
pub struct ShotOutcome {
    pub channel: usize,
    pub prepared: QubitState,
    pub herald_pass: bool,
    pub integrated_point: Complex64,
    pub rotated_value: f64,
    /// set only for herald-passed shots
    pub assigned: Option<QubitState>,
    pub truth: Option<TrajectoryRecord>,
}

pub fn assign(value: f64, threshold: f64) -> QubitState {
    if value > threshold {
        QubitState::E
    } else {
        QubitState::G
    }
}

/// Where the excited-state assignment errors came from, per the truth trajectories.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// e-prepared kept shots that relaxed during the readout window
    pub decay_during_readout: f64,
    /// kept shots whose readout began in the other state
    pub preparation_error_g: f64,
    pub preparation_error_e: f64,
    /// the remainder of the empirical errors, attributed to noise overlap
    pub overlap_g: f64,
    pub overlap_e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelFidelity {
    pub channel: usize,
    pub shots_g: usize,
    pub shots_e: usize,
    pub discarded_g: usize,
    pub discarded_e: usize,
    pub threshold: f64,
    /// pooled mixture fit; absent when the data are noiseless point masses
    pub fit: Option<DoubleGaussianFit>,
    /// fitted component weights within each prepared ensemble
    pub weights_g: [f64; 2],
    pub weights_e: [f64; 2],
    pub err_g_as_e: f64,
    pub err_e_as_g: f64,
    pub fidelity: f64,
    pub fidelity_alt: f64,
    pub empirical_err_g_as_e: f64,
    pub empirical_err_e_as_g: f64,
    pub empirical_fidelity: f64,
    pub budget: Option<ErrorBudget>,
}

impl ChannelFidelity {
    pub fn discard_fraction(&self) -> f64 {
        let total = self.shots_g + self.shots_e + self.discarded_g + self.discarded_e;
        (self.discarded_g + self.discarded_e) as f64 / total.max(1) as f64
    }
}

fn empirical(values: &[f64], threshold: f64, prepared: QubitState) -> f64 {
    let wrong = values.iter().filter(|&&v| assign(v, threshold) != prepared).count();
    wrong as f64 / values.len() as f64
}

fn budget(shots: &[&ShotOutcome], emp_g: f64, emp_e: f64) -> Option<ErrorBudget> {
    let (mut n_g, mut n_e, mut prep_g, mut prep_e, mut decay) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for s in shots {
        let tr = s.truth.as_ref()?;
        match s.prepared {
            QubitState::G => {
                n_g += 1;
                prep_g += usize::from(tr.initial_state != QubitState::G);
            }
            QubitState::E => {
                n_e += 1;
                if tr.initial_state == QubitState::E {
                    decay += usize::from(tr.first_decay().is_some());
                } else {
                    prep_e += 1;
                }
            }
        }
    }
    let fg = |k: usize| k as f64 / n_g.max(1) as f64;
    let fe = |k: usize| k as f64 / n_e.max(1) as f64;
    Some(ErrorBudget {
        decay_during_readout: fe(decay),
        preparation_error_g: fg(prep_g),
        preparation_error_e: fe(prep_e),
        overlap_g: (emp_g - fg(prep_g)).max(0.0),
        overlap_e: (emp_e - fe(prep_e) - fe(decay)).max(0.0),
    })
}

/// Fits the pooled herald-passed values of one channel, thresholds them and
/// reports model and empirical assignment errors for each prepared state.
///
/// The model errors weight each fitted component's erfc tail by that
/// component's share of the prepared ensemble, so preparation errors and
/// relaxation show up in both estimates.
pub fn fidelity_report(shots: &[ShotOutcome]) -> Result<ChannelFidelity> {
    let channel = shots.first().map(|s| s.channel).unwrap_or(0);
    if shots.iter().any(|s| s.channel != channel) {
        return Err(Error::Config("fidelity_report expects shots of one channel".into()));
    }
    let kept: Vec<&ShotOutcome> = shots.iter().filter(|s| s.herald_pass).collect();
    let g: Vec<f64> = kept.iter().filter(|s| s.prepared == QubitState::G).map(|s| s.rotated_value).collect();
    let e: Vec<f64> = kept.iter().filter(|s| s.prepared == QubitState::E).map(|s| s.rotated_value).collect();
    let discarded = |p: QubitState| shots.iter().filter(|s| !s.herald_pass && s.prepared == p).count();
    if g.is_empty() {
        return Err(Error::MissingEnsemble(format!("channel {channel}: no kept ground-prepared shots")));
    }
    if e.is_empty() {
        return Err(Error::MissingEnsemble(format!("channel {channel}: no kept excited-prepared shots")));
    }
    let pooled: Vec<f64> = g.iter().chain(&e).copied().collect();

    let fit = match fit_double_gaussian(&pooled) {
        Ok(f) if !f.single_component => Some(f),
        Ok(_) | Err(Error::CollapsedComponent { .. }) => None,
        Err(err) => return Err(err),
    };

    let (threshold, weights_g, weights_e, err_g_as_e, err_e_as_g);
    let emp_at = |t: f64| (empirical(&g, t, QubitState::G), empirical(&e, t, QubitState::E));
    match &fit {
        Some(f) => {
            threshold = f.threshold;
            weights_g = fit_weights(&g, f);
            weights_e = fit_weights(&e, f);
            err_g_as_e = weights_g[0] * upper_tail(threshold, f.mu0, f.sigma0) + weights_g[1] * upper_tail(threshold, f.mu1, f.sigma1);
            err_e_as_g = weights_e[0] * lower_tail(threshold, f.mu0, f.sigma0) + weights_e[1] * lower_tail(threshold, f.mu1, f.sigma1);
        }
        None => {
            let mg = g.iter().sum::<f64>() / g.len() as f64;
            let me = e.iter().sum::<f64>() / e.len() as f64;
            threshold = 0.5 * (mg + me);
            let (eg, ee) = emp_at(threshold);
            weights_g = [1.0 - eg, eg];
            weights_e = [ee, 1.0 - ee];
            err_g_as_e = eg;
            err_e_as_g = ee;
        }
    }
    let (emp_g, emp_e) = emp_at(threshold);
    Ok(ChannelFidelity {
        channel,
        shots_g: g.len(),
        shots_e: e.len(),
        discarded_g: discarded(QubitState::G),
        discarded_e: discarded(QubitState::E),
        threshold,
        fit,
        weights_g,
        weights_e,
        err_g_as_e,
        err_e_as_g,
        fidelity: 1.0 - 0.5 * (err_g_as_e + err_e_as_g),
        fidelity_alt: 1.0 - err_g_as_e - err_e_as_g,
        empirical_err_g_as_e: emp_g,
        empirical_err_e_as_g: emp_e,
        empirical_fidelity: 1.0 - 0.5 * (emp_g + emp_e),
        budget: budget(&kept, emp_g, emp_e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn shot(prepared: QubitState, value: f64, pass: bool) -> ShotOutcome {
        ShotOutcome {
            channel: 2,
            prepared,
            herald_pass: pass,
            integrated_point: Complex64::new(value, 0.0),
            rotated_value: value,
            assigned: None,
            truth: None,
        }
    }

    #[test]
    fn noiseless_separated_is_perfect() {
        let mut shots: Vec<_> = (0..1500).map(|_| shot(QubitState::G, -1.0, true)).collect();
        shots.extend((0..1500).map(|_| shot(QubitState::E, 1.0, true)));
        let r = fidelity_report(&shots).unwrap();
        assert_eq!(r.fidelity, 1.0);
        assert_eq!(r.empirical_fidelity, 1.0);
        assert!(r.fit.is_none());
    }

    #[test]
    fn missing_ensemble() {
        let shots: Vec<_> = (0..1500).map(|_| shot(QubitState::G, 0.0, true)).collect();
        assert!(matches!(fidelity_report(&shots), Err(Error::MissingEnsemble(_))));
    }

    #[test]
    fn model_matches_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mut shots = Vec::new();
        let n = 150_000;
        for i in 0..2 * n {
            let prepared = if i < n { QubitState::G } else { QubitState::E };
            // 3% of excited-prepared shots actually sit in the ground blob
            let in_e = prepared == QubitState::E && rng.gen::<f64>() > 0.03;
            let z: f64 = rng.sample(StandardNormal);
            let v = if in_e { 4.4 } else { 0.0 } + z;
            shots.push(shot(prepared, v, rng.gen::<f64>() > 0.04));
        }
        let r = fidelity_report(&shots).unwrap();
        assert!((r.fidelity - r.empirical_fidelity).abs() < 0.003, "{} {}", r.fidelity, r.empirical_fidelity);
        assert!((r.weights_e[0] - 0.03).abs() < 0.003);
        assert!((r.discard_fraction() - 0.04).abs() < 0.002);
        // ½erfc(2.2/√2) for the g tail; 0.97·that + 0.03·(1 − that) for e
        let tail = upper_tail(2.2, 0.0, 1.0);
        let oracle = 1.0 - 0.5 * (tail + 0.97 * tail + 0.03 * (1.0 - tail));
        assert!((r.fidelity - oracle).abs() < 0.003);
    }
}
