//! Dispersive-shift extraction from photon-number-dependent Ramsey fringes.

use super::ramsey::fit_ramsey;
use crate::feedline::{amplitude_for_photons, steady_state_photons};
use crate::fit::linear_fit;
use crate::params::{dispersive_shift, DeviceConfig};
use crate::qubit::ramsey_population;
use crate::runner::rng::{stream_rng, Stage};
use crate::{Error, Result};
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChiPlan {
    /// MHz
    pub ramsey_detuning: f64,
    /// μs
    pub max_delay: f64,
    /// μs
    pub delay_step: f64,
    pub shots_per_point: u64,
}

impl Default for ChiPlan {
    fn default() -> Self {
        Self {
            ramsey_detuning: 12.0,
            max_delay: 3.0,
            delay_step: 0.02,
            shots_per_point: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiEstimate {
    pub channel: usize,
    pub photons: Vec<f64>,
    /// fitted fringe frequency per photon setting, MHz
    pub frequencies: Vec<f64>,
    /// MHz per photon
    pub slope: f64,
    /// slope / 2, MHz
    pub chi: f64,
}

/// χ̂ = ½·d(fringe frequency)/dn̄ over a linear fit.
pub fn chi_from_frequencies(photons: &[f64], frequencies: &[f64]) -> Result<f64> {
    Ok(linear_fit(photons, frequencies)?.0 / 2.0)
}

/// Simulates Ramsey fringes with a resonant readout tone holding n̄ photons in
/// the cavity during the delay, fits each, and regresses frequency on n̄.
pub fn extract_chi(dev: &DeviceConfig, channel: usize, photon_settings: &[f64], plan: &ChiPlan, seed: u64) -> Result<ChiEstimate> {
    if photon_settings.len() < 2 {
        return Err(Error::InsufficientData("χ extraction needs at least two photon settings".into()));
    }
    let first = photon_settings[0];
    if photon_settings.iter().all(|&n| n == first) {
        return Err(Error::InsufficientData("χ extraction needs distinct photon settings".into()));
    }
    let cfg = &dev.channels[channel];
    let chi = dispersive_shift(cfg)?;
    let steps = (plan.max_delay / plan.delay_step).round() as usize;
    let delays: Vec<f64> = (0..=steps).map(|i| i as f64 * plan.delay_step).collect();
    let mut frequencies = Vec::with_capacity(photon_settings.len());
    for (k, &n) in photon_settings.iter().enumerate() {
        // tone on the ground-state pulled resonance
        let n_actual = if n > 0.0 {
            steady_state_photons(cfg, amplitude_for_photons(cfg, n, 0.0), 0.0)
        } else {
            0.0
        };
        let shift = 2.0 * chi * n_actual;
        let mut rng = stream_rng(seed, k as u64, channel, Stage::Ramsey);
        let p: Vec<f64> = delays
            .iter()
            .map(|&t| {
                let pe = ramsey_population(cfg, plan.ramsey_detuning, t, shift, 0.0);
                let hits = Binomial::new(plan.shots_per_point, pe).expect("probability in [0,1]").sample(&mut rng);
                hits as f64 / plan.shots_per_point as f64
            })
            .collect();
        frequencies.push(fit_ramsey(&delays, &p)?.freq);
    }
    let (slope, _) = linear_fit(photon_settings, &frequencies)?;
    Ok(ChiEstimate {
        channel,
        photons: photon_settings.to_vec(),
        frequencies,
        slope,
        chi: slope / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_configured_shift_on_q3() {
        let dev = DeviceConfig::table1();
        let est = extract_chi(&dev, 2, &[0.0, 1.0, 2.0], &ChiPlan::default(), 5).unwrap();
        let chi = dispersive_shift(&dev.channels[2]).unwrap();
        assert!((est.chi / chi - 1.0).abs() < 0.05, "{} vs {chi}", est.chi);
    }

    #[test]
    fn degenerate_settings() {
        let dev = DeviceConfig::table1();
        assert!(extract_chi(&dev, 0, &[0.0, 0.0, 0.0], &ChiPlan::default(), 1).is_err());
        assert!(extract_chi(&dev, 0, &[1.0], &ChiPlan::default(), 1).is_err());
    }

    #[test]
    fn slope_from_frequencies() {
        let chi = chi_from_frequencies(&[0.0, 1.0, 2.0], &[12.0, 9.18, 6.36]).unwrap();
        assert!((chi + 1.41).abs() < 1e-12);
    }
}
