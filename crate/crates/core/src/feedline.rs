//! Readout comb synthesis and cavity reflection on the shared feedline.
//!
//! Each cavity j obeys the input–output equation
//!
//! ```text
//! da_j/dt = −(i·2π(ν_j,s − ν_j) + κ_j/2)·a_j + √κ_ext,j · ε_j(t)
//! b(t)    = drive(t) − Σ_j √κ_ext,j · a_j(t)
//! ```
//!
//! written in the rotating frame of the bare cavity frequency ν_j, where
//! ν_j,s = ν_j ± χ_j is the resonance pulled by qubit state s. The input
//! ε_j = Σ_k ξ[j][k]·(component of the drive addressed to channel k).
//!
//! Steps are exact: every drive component is a gated tone, so between two
//! samples its envelope is linearly interpolated and its carrier is handled
//! in closed form. The solver is therefore unconditionally stable and has no
//! dependence on the inter-channel beat frequencies.

use crate::params::{angular, dispersive_shift, DeviceConfig, QubitCavityConfig, QubitState};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// A single sideband tone of the readout comb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    pub channel: String,
    /// tone frequency − carrier, MHz
    pub offset_freq: f64,
    /// incident-flux amplitude, √(photons/μs)
    pub amplitude: f64,
    /// radians
    #[serde(default)]
    pub phase: f64,
    /// μs
    #[serde(default)]
    pub start: f64,
    /// μs
    pub duration: f64,
}

impl ToneSpec {
    fn gate(&self, t: f64) -> bool {
        t >= self.start - 1e-12 && t < self.start + self.duration - 1e-9
    }
}

/// At most one tone per channel; any subset of channels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadoutComb {
    pub tones: Vec<ToneSpec>,
}

impl ReadoutComb {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        for (i, t) in self.tones.iter().enumerate() {
            if self.tones[..i].iter().any(|o| o.channel == t.channel) {
                return Err(Error::Config(format!("channel {} appears twice in the comb", t.channel)));
            }
            if !(t.amplitude >= 0.0) {
                return Err(Error::Config(format!("tone {}: negative amplitude", t.channel)));
            }
            if !(t.duration > 0.0) {
                return Err(Error::Config(format!("tone {}: duration must be > 0", t.channel)));
            }
            if t.offset_freq.abs() >= sample_rate / 2.0 {
                return Err(Error::Aliasing {
                    offset_mhz: t.offset_freq,
                    sample_rate_mhz: sample_rate,
                });
            }
        }
        Ok(())
    }

    pub fn max_abs_offset(&self) -> f64 {
        self.tones.iter().map(|t| t.offset_freq.abs()).fold(0.0, f64::max)
    }
}

/// Number of samples covering `duration` at `sample_rate`: ⌈duration·fs⌉,
/// with products within 1e-9 of an integer treated as exact.
pub fn sample_count(duration: f64, sample_rate: f64) -> usize {
    let x = duration * sample_rate;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Uniformly sampled complex baseband envelope in √(photons/μs).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexWaveform {
    pub samples: Vec<Complex64>,
    /// MHz
    pub sample_rate: f64,
    /// time of the first sample, μs
    pub t0: f64,
}

impl ComplexWaveform {
    pub fn zeros(len: usize, sample_rate: f64, t0: f64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
            t0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * a).collect(),
            ..*self
        }
    }

    /// Σ |s|²·Δt
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.dt()
    }

    /// Writes `t,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_us,re,im")?;
        for (n, s) in self.samples.iter().enumerate() {
            writeln!(w, "{:.9},{:.12e},{:.12e}", self.time(n), s.re, s.im)?;
        }
        Ok(())
    }
}

/// s[n] = Σ_k A_k·exp(i(2π f_k t_n + φ_k))·gate_k(t_n)
pub fn synthesize_comb(comb: &ReadoutComb, span: f64, sample_rate: f64) -> Result<ComplexWaveform> {
    comb.validate(sample_rate)?;
    let len = sample_count(span, sample_rate);
    let mut wf = ComplexWaveform::zeros(len, sample_rate, 0.0);
    for tone in &comb.tones {
        for n in 0..len {
            let t = wf.time(n);
            if tone.gate(t) {
                wf.samples[n] += Complex64::from_polar(tone.amplitude, 2.0 * PI * tone.offset_freq * t + tone.phase);
            }
        }
    }
    Ok(wf)
}

/// One channel's share of the drive, stored as its envelope in the tone's
/// own frame: component(t) = envelope(t)·exp(i2π·offset·t).
#[derive(Clone, Debug, PartialEq)]
pub struct DriveComponent {
    /// device channel index
    pub channel: usize,
    pub offset_freq: f64,
    pub envelope: Vec<Complex64>,
}

/// The multiplexed drive split by addressed channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CombDrive {
    pub sample_rate: f64,
    pub t0: f64,
    pub len: usize,
    pub components: Vec<DriveComponent>,
}

impl CombDrive {
    pub fn from_comb(dev: &DeviceConfig, comb: &ReadoutComb, span: f64, sample_rate: f64) -> Result<Self> {
        comb.validate(sample_rate)?;
        let len = sample_count(span, sample_rate);
        let components = comb
            .tones
            .iter()
            .map(|tone| {
                let channel = dev
                    .channel_index(&tone.channel)
                    .ok_or_else(|| Error::Config(format!("comb refers to unknown channel {}", tone.channel)))?;
                let base = Complex64::from_polar(tone.amplitude, tone.phase);
                let envelope = (0..len)
                    .map(|n| {
                        let t = n as f64 / sample_rate;
                        if tone.gate(t) {
                            base
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                Ok(DriveComponent {
                    channel,
                    offset_freq: tone.offset_freq,
                    envelope,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sample_rate,
            t0: 0.0,
            len,
            components,
        })
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.sample_rate
    }

    pub fn synthesize(&self) -> ComplexWaveform {
        let mut wf = ComplexWaveform::zeros(self.len, self.sample_rate, self.t0);
        for c in &self.components {
            for (n, (s, e)) in wf.samples.iter_mut().zip(&c.envelope).enumerate() {
                let t = self.t0 + n as f64 / self.sample_rate;
                *s += e * Complex64::from_polar(1.0, 2.0 * PI * c.offset_freq * t);
            }
        }
        wf
    }

    pub fn scale(&mut self, a: Complex64) {
        for c in &mut self.components {
            for e in &mut c.envelope {
                *e *= a;
            }
        }
    }
}

/// Intra-cavity amplitudes a_j in √photons (bare-cavity rotating frame).
#[derive(Clone, Debug, PartialEq)]
pub struct CavityState {
    pub amplitudes: Vec<Complex64>,
}

impl CavityState {
    pub fn vacuum(n: usize) -> Self {
        Self {
            amplitudes: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn photons(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Piecewise-constant qubit state: `initial`, toggled at each time in `flips` (μs).
#[derive(Clone, Debug, PartialEq)]
pub struct StateSchedule {
    pub initial: QubitState,
    pub flips: Vec<f64>,
}

impl StateSchedule {
    pub fn constant(state: QubitState) -> Self {
        Self {
            initial: state,
            flips: Vec::new(),
        }
    }

    /// Right-continuous state at time t.
    pub fn state_at(&self, t: f64) -> QubitState {
        let n = self.flips.iter().take_while(|&&f| f <= t).count();
        if n % 2 == 0 {
            self.initial
        } else {
            self.initial.flipped()
        }
    }
}

/// Steady-state reflection Γ = 1 − κ_ext/(κ/2 + i·2πδ) with δ = drive − resonance (MHz).
pub fn reflection_coefficient(cfg: &QubitCavityConfig, detuning: f64) -> Complex64 {
    let kext = angular(cfg.kappa_ext);
    let k = angular(cfg.kappa_total());
    Complex64::new(1.0, 0.0) - kext / Complex64::new(k / 2.0, angular(detuning))
}

/// n̄ = κ_ext·ε² / ((2πδ)² + (κ/2)²), rates angular.
pub fn steady_state_photons(cfg: &QubitCavityConfig, amplitude: f64, detuning: f64) -> f64 {
    let kext = angular(cfg.kappa_ext);
    let k = angular(cfg.kappa_total());
    let d = angular(detuning);
    kext * amplitude * amplitude / (d * d + k * k / 4.0)
}

/// Inverse of [`steady_state_photons`] in the amplitude.
pub fn amplitude_for_photons(cfg: &QubitCavityConfig, photons: f64, detuning: f64) -> f64 {
    let unit = steady_state_photons(cfg, 1.0, detuning);
    (photons / unit).sqrt()
}

/// ∫₀¹ e^{zu} du and ∫₀¹ u·e^{zu} du.
fn psi12(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 0.25 {
        let mut p1 = Complex64::new(0.0, 0.0);
        let mut p2 = Complex64::new(0.0, 0.0);
        let mut zk = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for k in 0..18 {
            if k > 0 {
                fact *= k as f64;
            }
            p1 += zk / (fact * (k as f64 + 1.0));
            p2 += zk / (fact * (k as f64 + 2.0));
            zk *= z;
        }
        (p1, p2)
    } else {
        let ez = z.exp();
        let one = Complex64::new(1.0, 0.0);
        ((ez - one) / z, (ez * (z - one) + one) / (z * z))
    }
}

/// Exact evolution over `d` of da/dt = −λa + (c + m·s)·e^{iω s} with s ∈ [0, d].
#[inline]
fn step_exact(a: Complex64, lambda: Complex64, omega: f64, d: f64, c: Complex64, m: Complex64) -> Complex64 {
    let decay = (-lambda * d).exp();
    let (p1, p2) = psi12((lambda + Complex64::new(0.0, omega)) * d);
    decay * (a + c * d * p1 + m * d * d * p2)
}

/// Per-channel cavity constants.
#[derive(Clone, Debug)]
pub struct CavityModel {
    pub label: String,
    /// MHz
    pub chi: f64,
    /// ordinary MHz
    pub kappa: f64,
    /// √(angular κ_ext)
    pub sqrt_kext: f64,
    /// angular κ/2
    pub half_kappa: f64,
    /// bare cavity − carrier, MHz
    pub frame_offset: f64,
}

impl CavityModel {
    pub fn new(cfg: &QubitCavityConfig, carrier: f64) -> Result<Self> {
        let chi = dispersive_shift(cfg)?;
        Ok(Self {
            label: cfg.label.clone(),
            chi,
            kappa: cfg.kappa_total(),
            sqrt_kext: angular(cfg.kappa_ext).sqrt(),
            half_kappa: angular(cfg.kappa_total()) / 2.0,
            frame_offset: (cfg.cavity_freq - carrier) * 1e3,
        })
    }

    /// Pulled resonance relative to the bare cavity, MHz.
    pub fn pull(&self, state: QubitState) -> f64 {
        match state {
            QubitState::G => self.chi,
            QubitState::E => -self.chi,
        }
    }

    /// Decay constant in a frame rotating at `frame_offset + frame_shift` MHz.
    pub fn lambda(&self, state: QubitState, frame_shift: f64) -> Complex64 {
        Complex64::new(self.half_kappa, angular(frame_shift - self.pull(state)))
    }
}

/// The device as seen by the reflection solver.
#[derive(Clone, Debug)]
pub struct Feedline {
    pub cavities: Vec<CavityModel>,
    leakage: Vec<Vec<f64>>,
}

impl Feedline {
    pub fn new(dev: &DeviceConfig) -> Result<Self> {
        let cavities = dev
            .channels
            .iter()
            .map(|c| CavityModel::new(c, dev.carrier_freq))
            .collect::<Result<Vec<_>>>()?;
        let n = cavities.len();
        let leakage = (0..n).map(|j| (0..n).map(|k| dev.leakage(j, k)).collect()).collect();
        Ok(Self { cavities, leakage })
    }

    pub fn len(&self) -> usize {
        self.cavities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cavities.is_empty()
    }

    /// Requires at least 10 samples per cavity timescale, min(1/κ, 1/|χ|).
    pub fn check_resolution(&self, sample_rate: f64) -> Result<()> {
        for c in &self.cavities {
            let mut timescale = 1.0 / c.kappa;
            if c.chi != 0.0 {
                timescale = timescale.min(1.0 / c.chi.abs());
            }
            let samples = sample_rate * timescale;
            if samples < 10.0 {
                return Err(Error::Resolution {
                    channel: c.label.clone(),
                    samples_per_timescale: samples,
                });
            }
        }
        Ok(())
    }

    pub fn plan<'a>(&'a self, drive: &'a CombDrive) -> Result<ReflectPlan<'a>> {
        ReflectPlan::new(self, drive)
    }
}

/// Output of a reflection run.
#[derive(Clone, Debug)]
pub struct Reflection {
    pub output: ComplexWaveform,
    /// cavity state at every sample time (empty unless requested)
    pub trajectory: Vec<CavityState>,
    pub final_state: CavityState,
}

struct Coupling {
    cavity: usize,
    component: usize,
    /// √κ_ext·ξ
    strength: f64,
    /// angular frequency of the component in the cavity frame
    omega: f64,
    /// (e^{−λh}, h·e^{−λh}ψ1, h·e^{−λh}ψ2) for g and e
    coeffs: [(Complex64, Complex64, Complex64); 2],
}

/// Static precomputation for repeated reflections of one drive.
pub struct ReflectPlan<'a> {
    feedline: &'a Feedline,
    drive: &'a CombDrive,
    couplings: Vec<Coupling>,
    drive_total: Vec<Complex64>,
    /// e^{iωt_n} per coupling, flattened [coupling][n]
    coupling_phasors: Vec<Vec<Complex64>>,
    /// e^{i2π ν_j t_n} per cavity
    cavity_phasors: Vec<Vec<Complex64>>,
}

fn state_index(s: QubitState) -> usize {
    match s {
        QubitState::G => 0,
        QubitState::E => 1,
    }
}

impl<'a> ReflectPlan<'a> {
    fn new(feedline: &'a Feedline, drive: &'a CombDrive) -> Result<Self> {
        feedline.check_resolution(drive.sample_rate)?;
        let h = 1.0 / drive.sample_rate;
        let mut couplings = Vec::new();
        for (ci, comp) in drive.components.iter().enumerate() {
            if comp.channel >= feedline.len() {
                return Err(Error::Config(format!("drive component for unknown channel {}", comp.channel)));
            }
            for (j, cav) in feedline.cavities.iter().enumerate() {
                let xi = feedline.leakage[j][comp.channel];
                if xi == 0.0 {
                    continue;
                }
                let omega = angular(comp.offset_freq - cav.frame_offset);
                let coeff = |s: QubitState| {
                    let lambda = cav.lambda(s, 0.0);
                    let decay = (-lambda * h).exp();
                    let (p1, p2) = psi12((lambda + Complex64::new(0.0, omega)) * h);
                    (decay, decay * p1 * h, decay * p2 * h)
                };
                couplings.push(Coupling {
                    cavity: j,
                    component: ci,
                    strength: cav.sqrt_kext * xi,
                    omega,
                    coeffs: [coeff(QubitState::G), coeff(QubitState::E)],
                });
            }
        }
        let drive_total = drive.synthesize().samples;
        let coupling_phasors = couplings
            .iter()
            .map(|c| (0..drive.len).map(|n| Complex64::from_polar(1.0, c.omega * drive.time(n))).collect())
            .collect();
        let cavity_phasors = feedline
            .cavities
            .iter()
            .map(|c| {
                (0..drive.len)
                    .map(|n| Complex64::from_polar(1.0, angular(c.frame_offset) * drive.time(n)))
                    .collect()
            })
            .collect();
        Ok(Self {
            feedline,
            drive,
            couplings,
            drive_total,
            coupling_phasors,
            cavity_phasors,
        })
    }

    /// Runs the reflection with time-dependent qubit states.
    ///
    /// `schedules[j]` gives channel j's state; flips inside a sample interval
    /// split the step at the flip time.
    pub fn run(&self, schedules: &[StateSchedule], initial: Option<&CavityState>, record: bool) -> Result<Reflection> {
        let nc = self.feedline.len();
        if schedules.len() != nc {
            return Err(Error::Config(format!("expected {nc} state schedules, got {}", schedules.len())));
        }
        let drive = self.drive;
        let h = 1.0 / drive.sample_rate;
        let mut a = match initial {
            Some(s) if s.amplitudes.len() == nc => s.amplitudes.clone(),
            Some(_) => return Err(Error::Config("initial cavity state has wrong size".into())),
            None => vec![Complex64::new(0.0, 0.0); nc],
        };
        let mut states: Vec<QubitState> = schedules.iter().map(|s| s.state_at(drive.t0)).collect();
        let mut next_flip: Vec<usize> = schedules
            .iter()
            .map(|s| s.flips.iter().take_while(|&&f| f <= drive.t0).count())
            .collect();

        let mut out = Vec::with_capacity(drive.len);
        let mut trajectory = Vec::with_capacity(if record { drive.len } else { 0 });
        let zero = Complex64::new(0.0, 0.0);
        let mut a_new = vec![zero; nc];
        let mut base_done = vec![false; nc];
        let mut split = vec![false; nc];

        for n in 0..drive.len {
            let mut y = self.drive_total[n];
            for (j, cav) in self.feedline.cavities.iter().enumerate() {
                y -= cav.sqrt_kext * a[j] * self.cavity_phasors[j][n];
            }
            out.push(y);
            if record {
                trajectory.push(CavityState { amplitudes: a.clone() });
            }
            if n + 1 == drive.len {
                break;
            }
            let t = drive.time(n);
            let t_next = drive.time(n + 1);

            // Channels with a flip inside (t, t_next) take the split path.
            for (j, sched) in schedules.iter().enumerate() {
                split[j] = next_flip[j] < sched.flips.len() && sched.flips[next_flip[j]] < t_next;
                base_done[j] = false;
            }

            for (k, c) in self.couplings.iter().enumerate() {
                let j = c.cavity;
                if split[j] {
                    continue;
                }
                let env = &drive.components[c.component].envelope;
                let c0 = env[n];
                let dc = env[n + 1] - c0;
                let (decay, p1, p2) = c.coeffs[state_index(states[j])];
                if !base_done[j] {
                    a_new[j] = decay * a[j];
                    base_done[j] = true;
                }
                if c0 != zero || dc != zero {
                    a_new[j] += c.strength * self.coupling_phasors[k][n] * (c0 * p1 + dc * p2);
                }
            }
            for j in 0..nc {
                if split[j] {
                    a_new[j] = self.split_step(j, a[j], n, t, t_next, &schedules[j], &mut states[j], &mut next_flip[j]);
                } else if !base_done[j] {
                    let lambda = self.feedline.cavities[j].lambda(states[j], 0.0);
                    a_new[j] = (-lambda * h).exp() * a[j];
                }
            }
            std::mem::swap(&mut a, &mut a_new);
        }

        let final_state = CavityState { amplitudes: a };
        Ok(Reflection {
            output: ComplexWaveform {
                samples: out,
                sample_rate: drive.sample_rate,
                t0: drive.t0,
            },
            trajectory,
            final_state,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn split_step(
        &self,
        j: usize,
        mut a: Complex64,
        n: usize,
        t: f64,
        t_next: f64,
        sched: &StateSchedule,
        state: &mut QubitState,
        next_flip: &mut usize,
    ) -> Complex64 {
        let drive = self.drive;
        let h = t_next - t;
        let cav = &self.feedline.cavities[j];
        let mut s = t;
        loop {
            let seg_end = if *next_flip < sched.flips.len() && sched.flips[*next_flip] < t_next {
                sched.flips[*next_flip].max(s)
            } else {
                t_next
            };
            let d = seg_end - s;
            if d > 0.0 {
                let lambda = cav.lambda(*state, 0.0);
                let mut acc = (-lambda * d).exp() * a;
                for c in self.couplings.iter().filter(|c| c.cavity == j) {
                    let env = &drive.components[c.component].envelope;
                    let slope = (env[n + 1] - env[n]) / h;
                    let c_s = env[n] + slope * (s - t);
                    let carrier = Complex64::from_polar(1.0, c.omega * s);
                    let driven = step_exact(
                        Complex64::new(0.0, 0.0),
                        lambda,
                        c.omega,
                        d,
                        c.strength * c_s * carrier,
                        c.strength * slope * carrier,
                    );
                    acc += driven;
                }
                a = acc;
            }
            if seg_end >= t_next {
                break;
            }
            *state = state.flipped();
            *next_flip += 1;
            s = seg_end;
        }
        a
    }
}

/// Reflects `drive` off the device with every qubit held in `states`.
pub fn reflect(dev: &DeviceConfig, states: &[QubitState], drive: &CombDrive) -> Result<(ComplexWaveform, Vec<CavityState>)> {
    let feedline = Feedline::new(dev)?;
    let plan = feedline.plan(drive)?;
    let schedules: Vec<StateSchedule> = states.iter().map(|&s| StateSchedule::constant(s)).collect();
    let r = plan.run(&schedules, None, true)?;
    Ok((r.output, r.trajectory))
}

/// Closed-form response of one cavity to its own constant tone.
///
/// Works in the tone's rotating frame, which is also the demodulation frame,
/// so integrals of the reflected field are the noiseless demodulated points.
#[derive(Clone, Debug)]
pub struct AnalyticCavity {
    sqrt_kext: f64,
    /// ε·e^{iφ}
    drive: Complex64,
    lambda: [Complex64; 2],
}

impl AnalyticCavity {
    /// `tone_offset` is the tone frequency relative to the carrier (MHz).
    pub fn new(model: &CavityModel, amplitude: f64, phase: f64, tone_offset: f64) -> Self {
        let shift = tone_offset - model.frame_offset;
        Self {
            sqrt_kext: model.sqrt_kext,
            drive: Complex64::from_polar(amplitude, phase),
            lambda: [model.lambda(QubitState::G, shift), model.lambda(QubitState::E, shift)],
        }
    }

    pub fn steady_amplitude(&self, state: QubitState) -> Complex64 {
        self.sqrt_kext * self.drive / self.lambda[state_index(state)]
    }

    /// Steady-state reflected field ε·Γ.
    pub fn steady_output(&self, state: QubitState) -> Complex64 {
        self.drive - self.sqrt_kext * self.steady_amplitude(state)
    }

    /// Advances the cavity over `d` μs; returns (a_end, ∫ b dt).
    pub fn segment(&self, a0: Complex64, state: QubitState, d: f64) -> (Complex64, Complex64) {
        let lambda = self.lambda[state_index(state)];
        let a_ss = self.steady_amplitude(state);
        let decay = (-lambda * d).exp();
        let (p1, _) = psi12(-lambda * d);
        let a_end = a_ss + (a0 - a_ss) * decay;
        let int_a = a_ss * d + (a0 - a_ss) * d * p1;
        (a_end, self.drive * d - self.sqrt_kext * int_a)
    }

    /// Integrals of the reflected field over consecutive bins of width `bin`
    /// starting at `t0`, with the cavity empty at `t0` and the tone on throughout.
    pub fn integrate_bins(&self, schedule: &StateSchedule, t0: f64, bin: f64, nbins: usize) -> Vec<Complex64> {
        let mut a = Complex64::new(0.0, 0.0);
        let mut state = schedule.state_at(t0);
        let mut flip = schedule.flips.iter().take_while(|&&f| f <= t0).count();
        let mut out = Vec::with_capacity(nbins);
        for b in 0..nbins {
            let start = t0 + b as f64 * bin;
            let end = start + bin;
            let mut s = start;
            let mut acc = Complex64::new(0.0, 0.0);
            loop {
                let seg_end = if flip < schedule.flips.len() && schedule.flips[flip] < end {
                    schedule.flips[flip].max(s)
                } else {
                    end
                };
                let (a_end, int_b) = self.segment(a, state, seg_end - s);
                a = a_end;
                acc += int_b;
                if seg_end >= end {
                    break;
                }
                state = state.flipped();
                flip += 1;
                s = seg_end;
            }
            out.push(acc);
        }
        out
    }
}
