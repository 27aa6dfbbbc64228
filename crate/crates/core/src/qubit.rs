//! Classical-stochastic qubit dynamics.
//!
//! Qubits are modelled as a two-state jump process (relaxation at 1/T1,
//! thermal re-excitation by detailed balance) plus analytic coherence
//! envelopes for Rabi and Ramsey sequences.

use crate::feedline::{steady_state_photons, CavityModel, StateSchedule};
use crate::params::{angular, dispersive_shift, pulled_resonance, DeviceConfig, QubitCavityConfig, QubitState};
use crate::Result;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Probability that a π pulse leaves the qubit where it was.
pub const DEFAULT_PI_INFIDELITY: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseSequence {
    #[default]
    None,
    Pi,
    PiHalfPair,
    /// Rabi drive at `rate` MHz for `duration` μs.
    Rabi { rate: f64, duration: f64 },
    /// Two π/2 pulses at `detuning` MHz separated by `delay` μs.
    Ramsey { detuning: f64, delay: f64 },
}

/// One channel's qubit history over a measurement window.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub channel: usize,
    pub initial_state: QubitState,
    pub pulse_sequence: PulseSequence,
    /// μs from window start, strictly increasing
    pub jump_times: Vec<f64>,
    pub window: f64,
}

impl TrajectoryRecord {
    pub fn state_at(&self, t: f64) -> QubitState {
        let n = self.jump_times.iter().take_while(|&&j| j <= t).count();
        if n % 2 == 0 {
            self.initial_state
        } else {
            self.initial_state.flipped()
        }
    }

    pub fn final_state(&self) -> QubitState {
        self.state_at(self.window)
    }

    /// First e→g transition time, if any.
    pub fn first_decay(&self) -> Option<f64> {
        let mut state = self.initial_state;
        for &t in &self.jump_times {
            if state == QubitState::E {
                return Some(t);
            }
            state = state.flipped();
        }
        None
    }

    /// The same history as a schedule whose time origin is `offset`.
    pub fn schedule(&self, offset: f64) -> StateSchedule {
        StateSchedule {
            initial: self.initial_state,
            flips: self.jump_times.iter().map(|t| t + offset).collect(),
        }
    }
}

/// Ramsey phase bookkeeping for one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentPhase {
    pub channel: usize,
    /// radians
    pub phase: f64,
    /// ∈ (0, 1]
    pub decay: f64,
}

impl CoherentPhase {
    pub fn new(channel: usize) -> Self {
        Self {
            channel,
            phase: 0.0,
            decay: 1.0,
        }
    }

    /// Free evolution for `t` μs at `frequency` MHz with total dephasing rate `rate` (1/μs).
    pub fn evolve(&mut self, frequency: f64, rate: f64, t: f64) {
        self.phase += 2.0 * PI * frequency * t;
        self.decay *= (-rate.max(0.0) * t).exp();
    }

    /// P_e after the closing π/2 pulse.
    pub fn excited_population(&self) -> f64 {
        0.5 * (1.0 + self.decay * self.phase.cos())
    }
}

pub fn sample_initial_state<R: Rng + ?Sized>(cfg: &QubitCavityConfig, rng: &mut R) -> QubitState {
    if cfg.thermal_excited_pop > 0.0 && rng.gen::<f64>() < cfg.thermal_excited_pop {
        QubitState::E
    } else {
        QubitState::G
    }
}

/// Upward rate 1/T1 · p/(1−p), in 1/μs.
pub fn excitation_rate(cfg: &QubitCavityConfig) -> f64 {
    let p = cfg.thermal_excited_pop;
    if p <= 0.0 || !cfg.t1.is_finite() {
        0.0
    } else {
        p / (1.0 - p) / cfg.t1
    }
}

/// Draws the jump history over `window` μs starting from `initial`.
pub fn evolve_during_measurement<R: Rng + ?Sized>(
    cfg: &QubitCavityConfig,
    channel: usize,
    initial: QubitState,
    window: f64,
    rng: &mut R,
) -> TrajectoryRecord {
    let down = if cfg.t1.is_finite() && cfg.t1 > 0.0 { 1.0 / cfg.t1 } else { 0.0 };
    let up = excitation_rate(cfg);
    let mut t = 0.0;
    let mut state = initial;
    let mut jumps = Vec::new();
    loop {
        let rate = match state {
            QubitState::E => down,
            QubitState::G => up,
        };
        if rate <= 0.0 {
            break;
        }
        t += Exp::new(rate).expect("positive rate").sample(rng);
        if t >= window {
            break;
        }
        jumps.push(t);
        state = state.flipped();
    }
    TrajectoryRecord {
        channel,
        initial_state: initial,
        pulse_sequence: PulseSequence::None,
        jump_times: jumps,
        window,
    }
}

/// τ_R = (1/(2T1) + 1/(2T2))⁻¹
pub fn rabi_decay_time(cfg: &QubitCavityConfig) -> f64 {
    1.0 / (0.5 / cfg.t1 + 0.5 / cfg.t2_ramsey)
}

/// P_e(t) = ½(1 − e^{−t/τ_R}·cos(2πΩt))
pub fn rabi_population(cfg: &QubitCavityConfig, rate: f64, duration: f64) -> f64 {
    rabi_population_with_decay(rabi_decay_time(cfg), rate, duration)
}

pub fn rabi_population_with_decay(tau: f64, rate: f64, duration: f64) -> f64 {
    let env = if tau.is_finite() { (-duration / tau).exp() } else { 1.0 };
    (0.5 * (1.0 - env * (2.0 * PI * rate * duration).cos())).clamp(0.0, 1.0)
}

/// P_e = ½(1 + e^{−t(1/T2 + Γ_extra)}·cos(2π(δf + shift)t))
pub fn ramsey_population(cfg: &QubitCavityConfig, detuning: f64, delay: f64, extra_shift: f64, extra_dephasing_rate: f64) -> f64 {
    let mut phase = CoherentPhase::new(0);
    phase.evolve(detuning + extra_shift, 1.0 / cfg.t2_ramsey + extra_dephasing_rate, delay);
    phase.excited_population().clamp(0.0, 1.0)
}

/// Applies a control sequence to a qubit currently in `state`.
pub fn apply_pulse<R: Rng + ?Sized>(
    cfg: &QubitCavityConfig,
    seq: &PulseSequence,
    state: QubitState,
    pi_infidelity: f64,
    rng: &mut R,
) -> QubitState {
    let p_flip = match seq {
        PulseSequence::None => return state,
        PulseSequence::Pi => 1.0 - pi_infidelity,
        PulseSequence::PiHalfPair => ramsey_population(cfg, 0.0, 0.0, 0.0, 0.0),
        PulseSequence::Rabi { rate, duration } => rabi_population(cfg, *rate, *duration),
        PulseSequence::Ramsey { detuning, delay } => ramsey_population(cfg, *detuning, *delay, 0.0, 0.0),
    };
    if rng.gen::<f64>() < p_flip {
        state.flipped()
    } else {
        state
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrosstalkEffect {
    /// MHz
    pub stark_shift: f64,
    /// 1/μs
    pub extra_dephasing_rate: f64,
    pub spurious_photons: f64,
}

/// Photons leaked into cavity `victim` by the tone for `aggressor` at `offset` MHz.
pub fn spurious_photons(dev: &DeviceConfig, victim: usize, aggressor: usize, amplitude: f64, tone_offset: f64) -> Result<f64> {
    let vcfg = &dev.channels[victim];
    let xi = dev.leakage(victim, aggressor);
    let f_tone = dev.carrier_freq + tone_offset * 1e-3;
    let f_res = pulled_resonance(vcfg, QubitState::G)?;
    Ok(steady_state_photons(vcfg, xi * amplitude, (f_res - f_tone) * 1e3))
}

/// Stark shift 2χn̄ and measurement dephasing 8χ²n̄/κ on `victim` from a
/// tone addressed to `aggressor`.
pub fn crosstalk_effects(dev: &DeviceConfig, victim: usize, aggressor: usize, amplitude: f64, tone_offset: f64) -> Result<CrosstalkEffect> {
    let n = spurious_photons(dev, victim, aggressor, amplitude, tone_offset)?;
    let vcfg = &dev.channels[victim];
    let chi = dispersive_shift(vcfg)?;
    let model = CavityModel::new(vcfg, dev.carrier_freq)?;
    let chi_ang = angular(chi);
    let kappa_ang = angular(model.kappa);
    Ok(CrosstalkEffect {
        stark_shift: 2.0 * chi * n,
        extra_dephasing_rate: 8.0 * chi_ang * chi_ang * n / kappa_ang,
        spurious_photons: n,
    })
}

/// ξ such that the aggressor tone leaves `target` photons in the victim.
pub fn leakage_for_photons(dev: &DeviceConfig, victim: usize, aggressor: usize, amplitude: f64, tone_offset: f64, target: f64) -> Result<f64> {
    let mut probe = dev.clone();
    probe.set_leakage(victim, aggressor, 1.0);
    let unit = spurious_photons(&probe, victim, aggressor, amplitude, tone_offset)?;
    Ok((target / unit).sqrt())
}
