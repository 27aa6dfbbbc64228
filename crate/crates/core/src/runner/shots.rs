//! Per-shot simulation: qubit histories, measurement windows and the two
//! measurement engines (full waveform chain and analytic fast path).

use super::config::{ExperimentConfig, TimingSettings};
use super::rng::{stream_rng, Stage, FEEDLINE_CHANNEL};
use crate::amp::{digitize, gain_profile, AmplifierConfig, DigitizerConfig, GainFilter};
use crate::dsp::{DemodBank, DemodSpec, Window as DemodWindow};
use crate::feedline::{sample_count, AnalyticCavity, CavityModel, CombDrive, Feedline, ReflectPlan, StateSchedule};
use crate::params::{DeviceConfig, QubitState};
use crate::qubit::{apply_pulse, evolve_during_measurement, sample_initial_state, PulseSequence, TrajectoryRecord};
use crate::Result;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Everything that stays fixed across the shots of one run.
#[derive(Clone, Debug)]
pub struct Chain {
    /// device with the physics toggles applied
    pub dev: DeviceConfig,
    /// device indices of the read-out channels
    pub channels: Vec<usize>,
    /// MHz, per read-out channel
    pub offsets: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub amp: AmplifierConfig,
    pub dig: DigitizerConfig,
    pub sim_rate: f64,
    pub fast: bool,
    pub seed: u64,
    pub timing: TimingSettings,
}

impl Chain {
    pub fn from_config(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<Self> {
        cfg.validate(dev)?;
        let mut dev = dev.clone();
        for c in &mut dev.channels {
            if !cfg.physics.relaxation {
                c.t1 = f64::INFINITY;
            }
            if !cfg.physics.thermal {
                c.thermal_excited_pop = 0.0;
            }
        }
        let channels = cfg.readout_channels(&dev)?;
        let n = channels.len();
        Ok(Self {
            offsets: cfg.tone_offsets(&dev)?,
            amplitudes: cfg.tone_amplitudes(&dev, None)?,
            phases: cfg.comb.phases.clone().unwrap_or_else(|| vec![0.0; n]),
            dev,
            channels,
            amp: cfg.resolved_amplifier()?,
            dig: cfg.digitizer.clone(),
            sim_rate: cfg.simulation_rate,
            fast: cfg.fast_path,
            seed: cfg.seed,
            timing: cfg.timing.clone(),
        })
    }

    pub fn with_amplitudes(mut self, amplitudes: Vec<f64>) -> Self {
        self.amplitudes = amplitudes;
        self
    }

    pub fn labels(&self) -> Vec<String> {
        self.channels.iter().map(|&j| self.dev.channels[j].label.clone()).collect()
    }

    /// Amplitude gain √G at each read-out tone.
    pub fn tone_gains(&self) -> Vec<f64> {
        self.offsets
            .iter()
            .map(|o| gain_profile(&self.amp, self.dev.carrier_freq + o * 1e-3).sqrt())
            .collect()
    }

    fn comb_drive(&self, length: f64) -> Result<CombDrive> {
        let comb = crate::feedline::ReadoutComb {
            tones: self
                .channels
                .iter()
                .enumerate()
                .map(|(i, &j)| crate::feedline::ToneSpec {
                    channel: self.dev.channels[j].label.clone(),
                    offset_freq: self.offsets[i],
                    amplitude: self.amplitudes[i],
                    phase: self.phases[i],
                    start: 0.0,
                    duration: length,
                })
                .collect(),
        };
        CombDrive::from_comb(&self.dev, &comb, length, self.sim_rate)
    }

    /// A measurement window of `length` μs starting from empty cavities.
    pub fn window(&self, length: f64, noise_stage: Stage, fast_noise_stage: Stage) -> Result<Window> {
        let engine = if self.fast {
            let gains = self.tone_gains();
            let mut cavities = Vec::new();
            for (i, &j) in self.channels.iter().enumerate() {
                let model = CavityModel::new(&self.dev.channels[j], self.dev.carrier_freq)?;
                cavities.push(AnalyticCavity::new(&model, self.amplitudes[i], self.phases[i], self.offsets[i]));
            }
            let dig_samples = sample_count(length, self.dig.sample_rate) as f64;
            let noise_var: Vec<f64> = gains
                .iter()
                .map(|g| {
                    g * g * self.amp.noise_variance(1.0) * length
                        + dig_samples * (self.dig.adc_noise_flux / self.dig.sample_rate).powi(2)
                })
                .collect();
            Engine::Fast(FastWindow {
                channels: self.channels.clone(),
                cavities,
                gains,
                noise_sd: noise_var.iter().map(|v| v.sqrt()).collect(),
                length,
                stage: fast_noise_stage,
            })
        } else {
            let drive = self.comb_drive(length)?;
            let feedline = Feedline::new(&self.dev)?;
            feedline.check_resolution(self.sim_rate)?;
            let d = self.dig.decimation(self.sim_rate)?;
            let t0 = (d as f64 - 1.0) / (2.0 * self.sim_rate);
            let out_len = drive.len / d;
            let specs: Vec<DemodSpec> = self
                .channels
                .iter()
                .enumerate()
                .map(|(i, &j)| DemodSpec {
                    channel: j,
                    offset_freq: self.offsets[i],
                    integration_start: t0,
                    integration_length: out_len as f64 / self.dig.sample_rate,
                    trace_bin: None,
                    window: DemodWindow::Boxcar,
                })
                .collect();
            let bank = DemodBank::new(&specs, t0, self.dig.sample_rate, out_len)?;
            Engine::Full(Box::new(FullWindow {
                feedline,
                drive,
                bank,
                amp: self.amp.clone(),
                dig: self.dig.clone(),
                carrier: self.dev.carrier_freq,
                stage: noise_stage,
            }))
        };
        Ok(Window { length, engine })
    }
}

pub struct FullWindow {
    feedline: Feedline,
    drive: CombDrive,
    bank: DemodBank,
    amp: AmplifierConfig,
    dig: DigitizerConfig,
    carrier: f64,
    stage: Stage,
}

pub struct FastWindow {
    channels: Vec<usize>,
    cavities: Vec<AnalyticCavity>,
    gains: Vec<f64>,
    noise_sd: Vec<f64>,
    length: f64,
    stage: Stage,
}

enum Engine {
    Full(Box<FullWindow>),
    Fast(FastWindow),
}

pub struct Window {
    pub length: f64,
    engine: Engine,
}

impl Window {
    pub fn prepare(&self) -> Result<Prepared<'_>> {
        Ok(match &self.engine {
            Engine::Full(w) => Prepared::Full(w.feedline.plan(&w.drive)?, w),
            Engine::Fast(w) => Prepared::Fast(w),
        })
    }
}

/// A window ready for repeated measurement.
pub enum Prepared<'a> {
    Full(ReflectPlan<'a>, &'a FullWindow),
    Fast(&'a FastWindow),
}

/// Per-thread mutable state.
#[derive(Default)]
pub struct Scratch {
    filter: Option<GainFilter>,
}

/// Where measurement noise comes from.
#[derive(Clone, Copy, Debug)]
pub enum Noise {
    Off,
    Shot { seed: u64, shot: u64 },
}

impl Prepared<'_> {
    /// Integrated demodulated points of the read-out channels.
    ///
    /// `schedules` holds one entry per device channel, timed from the window start.
    pub fn measure(&self, schedules: &[StateSchedule], noise: Noise, scratch: &mut Scratch) -> Result<Vec<Complex64>> {
        match self {
            Prepared::Full(plan, w) => {
                let mut wf = plan.run(schedules, None, false)?.output;
                let (len, fs) = (wf.len(), wf.sample_rate);
                let filter = scratch.filter.get_or_insert_with(|| GainFilter::new(&w.amp, w.carrier, len, fs));
                let mut rng = match noise {
                    Noise::Shot { seed, shot } => stream_rng(seed, shot, FEEDLINE_CHANNEL, w.stage),
                    Noise::Off => stream_rng(0, 0, FEEDLINE_CHANNEL, w.stage),
                };
                match noise {
                    Noise::Off => filter.apply_linear(&mut wf),
                    Noise::Shot { .. } => filter.amplify(&mut wf, &mut rng),
                }
                let adc_on = w.dig.adc_noise_flux > 0.0 && matches!(noise, Noise::Shot { .. });
                let wf = if w.dig.sample_rate == fs && !adc_on {
                    wf
                } else {
                    let mut dig = w.dig.clone();
                    if !adc_on {
                        dig.adc_noise_flux = 0.0;
                    }
                    digitize(&dig, &wf, &mut rng)?
                };
                Ok(w.bank.integrate(&wf))
            }
            Prepared::Fast(w) => Ok(w
                .cavities
                .iter()
                .enumerate()
                .map(|(i, cav)| {
                    let j = w.channels[i];
                    let s = cav.integrate_bins(&schedules[j], 0.0, w.length, 1)[0] * w.gains[i];
                    match noise {
                        Noise::Off => s,
                        Noise::Shot { seed, shot } => {
                            let mut rng = stream_rng(seed, shot, j, w.stage);
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            s + Complex64::new(re, im) * w.noise_sd[i]
                        }
                    }
                })
                .collect()),
        }
    }
}

/// One shot's qubit history across the herald and readout windows, for every device channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotHistory {
    /// herald-window schedules (empty when heralding is off)
    pub herald: Vec<StateSchedule>,
    pub readout: Vec<TrajectoryRecord>,
}

impl ShotHistory {
    pub fn readout_schedules(&self) -> Vec<StateSchedule> {
        self.readout.iter().map(|r| r.schedule(0.0)).collect()
    }
}

/// Draws the qubit histories of one shot.
///
/// Per channel: thermal initial state, free evolution through the herald
/// window and gap, the control pulse, then jumps during the readout window.
pub fn sample_history(chain: &Chain, shot: u64, pulses: &[PulseSequence], readout_window: f64) -> ShotHistory {
    let t = &chain.timing;
    let mut herald = Vec::new();
    let mut readout = Vec::with_capacity(chain.dev.len());
    for (j, cfg) in chain.dev.channels.iter().enumerate() {
        let seed = chain.seed;
        let mut state = sample_initial_state(cfg, &mut stream_rng(seed, shot, j, Stage::ThermalInit));
        if t.herald {
            let pre = evolve_during_measurement(cfg, j, state, t.herald_length + t.herald_gap, &mut stream_rng(seed, shot, j, Stage::HeraldTrajectory));
            state = pre.final_state();
            herald.push(pre.schedule(0.0));
        }
        let seq = &pulses[j];
        state = apply_pulse(cfg, seq, state, t.pi_infidelity, &mut stream_rng(seed, shot, j, Stage::Pulse));
        let mut rec = evolve_during_measurement(cfg, j, state, readout_window, &mut stream_rng(seed, shot, j, Stage::ReadoutTrajectory));
        rec.pulse_sequence = seq.clone();
        readout.push(rec);
    }
    ShotHistory { herald, readout }
}

/// Raw points of one shot.
#[derive(Clone, Debug)]
pub struct ShotPoints {
    pub herald: Option<Vec<Complex64>>,
    pub readout: Vec<Complex64>,
}

/// Herald and readout windows with their noise stages.
pub struct Windows {
    pub herald: Option<Window>,
    pub readout: Window,
}

impl Windows {
    pub fn new(chain: &Chain, readout_length: f64) -> Result<Self> {
        let herald = if chain.timing.herald {
            Some(chain.window(chain.timing.herald_length, Stage::HeraldNoise, Stage::FastHeraldNoise)?)
        } else {
            None
        };
        Ok(Self {
            herald,
            readout: chain.window(readout_length, Stage::ReadoutNoise, Stage::FastReadoutNoise)?,
        })
    }

    pub fn prepare(&self) -> Result<PreparedWindows<'_>> {
        Ok(PreparedWindows {
            herald: self.herald.as_ref().map(|w| w.prepare()).transpose()?,
            readout: self.readout.prepare()?,
        })
    }
}

pub struct PreparedWindows<'a> {
    pub herald: Option<Prepared<'a>>,
    pub readout: Prepared<'a>,
}

#[derive(Default)]
pub struct ShotScratch {
    herald: Scratch,
    readout: Scratch,
}

/// State-conditioned references measured without noise or jumps.
#[derive(Clone, Debug)]
pub struct References {
    pub herald: Option<(Vec<Complex64>, Vec<Complex64>)>,
    pub readout: (Vec<Complex64>, Vec<Complex64>),
}

impl PreparedWindows<'_> {
    pub fn measure(&self, history: &ShotHistory, noise: Noise, scratch: &mut ShotScratch) -> Result<ShotPoints> {
        let herald = match &self.herald {
            Some(w) => Some(w.measure(&history.herald, noise, &mut scratch.herald)?),
            None => None,
        };
        let readout = self.readout.measure(&history.readout_schedules(), noise, &mut scratch.readout)?;
        Ok(ShotPoints { herald, readout })
    }

    pub fn references(&self, n_channels: usize) -> Result<References> {
        let g = vec![StateSchedule::constant(QubitState::G); n_channels];
        let e = vec![StateSchedule::constant(QubitState::E); n_channels];
        let mut scratch = ShotScratch::default();
        let herald = match &self.herald {
            Some(w) => Some((
                w.measure(&g, Noise::Off, &mut scratch.herald)?,
                w.measure(&e, Noise::Off, &mut scratch.herald)?,
            )),
            None => None,
        };
        let readout = (
            self.readout.measure(&g, Noise::Off, &mut scratch.readout)?,
            self.readout.measure(&e, Noise::Off, &mut scratch.readout)?,
        );
        Ok(References { herald, readout })
    }
}
