//! Experiment configuration.

use crate::amp::{AmplifierConfig, DigitizerConfig};
use crate::dsp::snap_integration_length;
use crate::feedline::{amplitude_for_photons, ReadoutComb, ToneSpec};
use crate::params::{dispersive_shift, validate_device, DeviceConfig, FrequencyBand, ValidationContext, ValidationReport};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// The shipped operating point.
pub const DEFAULTS_JSON: &str = include_str!("../../data/defaults.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Spectroscopy,
    Rabi,
    Ramsey,
    #[default]
    Histogram,
    Jumps,
    Crosstalk,
    ChiCalibration,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Spectroscopy,
        Self::Rabi,
        Self::Ramsey,
        Self::Histogram,
        Self::Jumps,
        Self::Crosstalk,
        Self::ChiCalibration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Spectroscopy => "spectroscopy",
            Self::Rabi => "rabi",
            Self::Ramsey => "ramsey",
            Self::Histogram => "histogram",
            Self::Jumps => "jumps",
            Self::Crosstalk => "crosstalk",
            Self::ChiCalibration => "chi_calibration",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombSettings {
    /// channel labels to read out; all when absent
    pub channels: Option<Vec<String>>,
    /// steady-state photon number each tone targets when `amplitudes` is absent
    pub photons: f64,
    /// explicit amplitudes in √(photons/μs), one per read-out channel
    pub amplitudes: Option<Vec<f64>>,
    /// radians, one per read-out channel
    pub phases: Option<Vec<f64>>,
    /// tone − carrier in MHz; defaults to each bare cavity
    pub offsets: Option<Vec<f64>>,
    /// μs
    pub integration_length: f64,
    /// snap the integration to whole beat periods of the comb
    pub snap_integration: bool,
}

impl Default for CombSettings {
    fn default() -> Self {
        Self {
            channels: None,
            photons: 2.5,
            amplitudes: None,
            phases: None,
            offsets: None,
            integration_length: 1.0,
            snap_integration: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSettings {
    pub herald: bool,
    /// μs
    pub herald_length: f64,
    /// idle time between herald and control pulse, μs
    pub herald_gap: f64,
    pub pi_infidelity: f64,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self {
            herald: true,
            herald_length: 1.0,
            herald_gap: 0.5,
            pi_infidelity: crate::qubit::DEFAULT_PI_INFIDELITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSettings {
    /// T1 relaxation and thermal re-excitation during the sequence
    pub relaxation: bool,
    /// thermal initial population
    pub thermal: bool,
}

impl Default for PhysicsSettings {
    fn default() -> Self {
        Self {
            relaxation: true,
            thermal: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramPlan {
    pub bins: usize,
}

impl Default for HistogramPlan {
    fn default() -> Self {
        Self { bins: 120 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectroscopyPlan {
    pub points: usize,
    /// sweep half-width in units of each cavity's κ
    pub span_kappas: f64,
    /// on-resonance photon number of the probe
    pub photons: f64,
    /// ring-up time before measuring, in units of 1/κ
    pub settle_kappas: f64,
    /// μs
    pub measure_length: f64,
}

impl Default for SpectroscopyPlan {
    fn default() -> Self {
        Self {
            points: 81,
            span_kappas: 3.0,
            photons: 0.5,
            settle_kappas: 20.0,
            measure_length: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiPlan {
    /// MHz
    pub rate: f64,
    /// μs
    pub max_duration: f64,
    /// μs
    pub step: f64,
    pub shots_per_point: usize,
}

impl Default for RabiPlan {
    fn default() -> Self {
        Self {
            rate: 5.0,
            max_duration: 0.6,
            step: 0.01,
            shots_per_point: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamseyPlan {
    /// MHz
    pub detuning: f64,
    /// μs
    pub max_delay: f64,
    /// μs
    pub delay_step: f64,
    pub shots_per_point: u64,
}

impl Default for RamseyPlan {
    fn default() -> Self {
        Self {
            detuning: 2.5,
            max_delay: 3.0,
            delay_step: 0.02,
            shots_per_point: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpPlan {
    /// photon number of the continuous tones
    pub photons: f64,
    /// μs
    pub trace_bin: f64,
    /// consecutive bins needed to confirm a jump
    pub min_dwell: usize,
    /// μs
    pub window: f64,
    /// decays before this time (μs) are left out of the lifetime statistics
    pub settle: f64,
    /// 0 means `shots`
    pub traces: usize,
    /// traces written to CSV per channel
    pub export_traces: usize,
}

impl Default for JumpPlan {
    fn default() -> Self {
        Self {
            photons: 10.0,
            trace_bin: 0.24,
            min_dwell: 4,
            window: 500.0,
            settle: 1.92,
            traces: 0,
            export_traces: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstalkPlan {
    pub victim: String,
    pub aggressor: String,
    /// tune ξ so the aggressor leaves this many photons in the victim; the
    /// device leakage matrix is used as-is when absent
    pub spurious_photons: Option<f64>,
    pub ramsey: RamseyPlan,
}

impl Default for CrosstalkPlan {
    fn default() -> Self {
        Self {
            victim: "Q3".into(),
            aggressor: "Q4".into(),
            spurious_photons: Some(0.106),
            ramsey: RamseyPlan::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChiCalibrationPlan {
    pub photons: Vec<f64>,
    /// MHz
    pub ramsey_detuning: f64,
    /// μs
    pub max_delay: f64,
    /// μs
    pub delay_step: f64,
    pub shots_per_point: u64,
}

impl Default for ChiCalibrationPlan {
    fn default() -> Self {
        let p = crate::analysis::chi::ChiPlan::default();
        Self {
            photons: vec![0.0, 1.0, 2.0],
            ramsey_detuning: p.ramsey_detuning,
            max_delay: p.max_delay,
            delay_step: p.delay_step,
            shots_per_point: p.shots_per_point,
        }
    }
}

impl ChiCalibrationPlan {
    pub fn chi_plan(&self) -> crate::analysis::chi::ChiPlan {
        crate::analysis::chi::ChiPlan {
            ramsey_detuning: self.ramsey_detuning,
            max_delay: self.max_delay,
            delay_step: self.delay_step,
            shots_per_point: self.shots_per_point,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// device JSON; the built-in four-qubit device when absent
    pub device: Option<PathBuf>,
    pub amplifier: AmplifierConfig,
    /// optional `freq_GHz,gain_dB` CSV replacing the analytic gain profile
    pub gain_table: Option<PathBuf>,
    pub digitizer: DigitizerConfig,
    /// waveform simulation rate, MHz
    pub simulation_rate: f64,
    pub comb: CombSettings,
    pub timing: TimingSettings,
    pub physics: PhysicsSettings,
    /// shots per prepared state
    pub shots: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub fast_path: bool,
    pub histogram: HistogramPlan,
    pub spectroscopy: SpectroscopyPlan,
    pub rabi: RabiPlan,
    pub ramsey: RamseyPlan,
    pub jumps: JumpPlan,
    pub crosstalk: CrosstalkPlan,
    pub chi_calibration: ChiCalibrationPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Histogram,
            device: None,
            amplifier: AmplifierConfig {
                efficiency: CALIBRATED_EFFICIENCY,
                ..AmplifierConfig::default()
            },
            gain_table: None,
            digitizer: DigitizerConfig::default(),
            simulation_rate: 500.0,
            comb: CombSettings::default(),
            timing: TimingSettings::default(),
            physics: PhysicsSettings::default(),
            shots: 10_000,
            seed: 20_240_611,
            output_dir: PathBuf::from("out"),
            fast_path: false,
            histogram: HistogramPlan::default(),
            spectroscopy: SpectroscopyPlan::default(),
            rabi: RabiPlan::default(),
            ramsey: RamseyPlan::default(),
            jumps: JumpPlan::default(),
            crosstalk: CrosstalkPlan::default(),
            chi_calibration: ChiCalibrationPlan::default(),
        }
    }
}

/// η found by bisection so that Q2 reaches F = 0.9857 on the full chain.
pub const CALIBRATED_EFFICIENCY: f64 = 0.2164;

impl ExperimentConfig {
    /// The shipped `defaults.json`.
    pub fn shipped() -> Self {
        serde_json::from_str(DEFAULTS_JSON).expect("shipped defaults parse")
    }

    /// Reads a config; relative paths inside it are taken relative to the file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.device, &mut cfg.gain_table].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_device(&self) -> Result<DeviceConfig> {
        match &self.device {
            Some(p) => DeviceConfig::from_file(p).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
                other => other,
            }),
            None => Ok(DeviceConfig::table1()),
        }
    }

    /// Amplifier settings with any external gain table loaded.
    pub fn resolved_amplifier(&self) -> Result<AmplifierConfig> {
        let mut amp = self.amplifier.clone();
        if let Some(p) = &self.gain_table {
            amp.gain_table = Some(AmplifierConfig::load_gain_table(p).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
                other => other,
            })?);
        }
        Ok(amp)
    }

    /// Device indices of the channels that are read out.
    pub fn readout_channels(&self, dev: &DeviceConfig) -> Result<Vec<usize>> {
        match &self.comb.channels {
            None => Ok((0..dev.len()).collect()),
            Some(labels) => labels
                .iter()
                .map(|l| dev.channel_index(l).ok_or_else(|| Error::Config(format!("unknown channel '{l}'"))))
                .collect(),
        }
    }

    fn per_channel(&self, field: &str, values: &Option<Vec<f64>>, n: usize) -> Result<()> {
        match values {
            Some(v) if v.len() != n => Err(Error::Config(format!("comb.{field} has {} entries for {n} channels", v.len()))),
            _ => Ok(()),
        }
    }

    /// Tone offsets in MHz per read-out channel.
    pub fn tone_offsets(&self, dev: &DeviceConfig) -> Result<Vec<f64>> {
        let ch = self.readout_channels(dev)?;
        Ok(match &self.comb.offsets {
            Some(o) => o.clone(),
            None => ch.iter().map(|&j| dev.cavity_offset(j)).collect(),
        })
    }

    /// Tone amplitude for channel `j` holding `photons` at its offset.
    pub fn amplitude_for(dev: &DeviceConfig, j: usize, offset: f64, photons: f64) -> Result<f64> {
        let cfg = &dev.channels[j];
        let chi = dispersive_shift(cfg)?;
        // pulled resonances sit at ν ± χ; averaging the two keeps n̄ state independent for a centred tone
        let nu = dev.carrier_freq * 1e3 + offset;
        let bare = cfg.cavity_freq * 1e3;
        let dg = bare + chi - nu;
        let de = bare - chi - nu;
        let a_g = amplitude_for_photons(cfg, photons, dg);
        let a_e = amplitude_for_photons(cfg, photons, de);
        Ok(0.5 * (a_g + a_e))
    }

    /// Amplitude per read-out channel at `photons` (or the explicit list).
    pub fn tone_amplitudes(&self, dev: &DeviceConfig, photons: Option<f64>) -> Result<Vec<f64>> {
        let ch = self.readout_channels(dev)?;
        let offsets = self.tone_offsets(dev)?;
        if photons.is_none() {
            if let Some(a) = &self.comb.amplitudes {
                return Ok(a.clone());
            }
        }
        let n = photons.unwrap_or(self.comb.photons);
        ch.iter().zip(&offsets).map(|(&j, &o)| Self::amplitude_for(dev, j, o, n)).collect()
    }

    /// Continuous comb over `duration` μs at `photons` per tone (defaults when `None`).
    pub fn comb(&self, dev: &DeviceConfig, duration: f64, photons: Option<f64>) -> Result<ReadoutComb> {
        let ch = self.readout_channels(dev)?;
        let offsets = self.tone_offsets(dev)?;
        let amps = self.tone_amplitudes(dev, photons)?;
        let phases = self.comb.phases.clone().unwrap_or_else(|| vec![0.0; ch.len()]);
        Ok(ReadoutComb {
            tones: ch
                .iter()
                .enumerate()
                .map(|(i, &j)| ToneSpec {
                    channel: dev.channels[j].label.clone(),
                    offset_freq: offsets[i],
                    amplitude: amps[i],
                    phase: phases[i],
                    start: 0.0,
                    duration,
                })
                .collect(),
        })
    }

    /// Integration length after optional snapping to the comb's beat period.
    pub fn integration_length(&self, dev: &DeviceConfig) -> Result<f64> {
        let offsets = self.tone_offsets(dev)?;
        let mut min_spacing = f64::INFINITY;
        for (i, a) in offsets.iter().enumerate() {
            for b in &offsets[i + 1..] {
                min_spacing = min_spacing.min((a - b).abs());
            }
        }
        if self.comb.snap_integration && min_spacing.is_finite() {
            Ok(snap_integration_length(self.comb.integration_length, min_spacing))
        } else {
            Ok(self.comb.integration_length)
        }
    }

    pub fn validation_context(&self) -> ValidationContext {
        ValidationContext {
            amplifier_band: Some(FrequencyBand::centered(self.amplifier.pump_freq, self.amplifier.bandwidth)),
            sample_rate: Some(self.digitizer.sample_rate),
        }
    }

    /// Device-level invariant report for the configured amplifier and digitizer.
    pub fn device_report(&self, dev: &DeviceConfig) -> ValidationReport {
        validate_device(dev, &self.validation_context())
    }

    /// Checks everything that can be checked before a shot runs.
    pub fn validate(&self, dev: &DeviceConfig) -> Result<()> {
        self.device_report(dev).into_result()?;
        if self.shots < 1 {
            return Err(Error::Config("shots must be >= 1".into()));
        }
        self.resolved_amplifier()?.validate()?;
        if !(self.simulation_rate > 0.0) {
            return Err(Error::Config("simulation rate must be > 0".into()));
        }
        self.digitizer.decimation(self.simulation_rate)?;
        let ch = self.readout_channels(dev)?;
        if ch.is_empty() {
            return Err(Error::Config("comb reads out no channels".into()));
        }
        self.per_channel("amplitudes", &self.comb.amplitudes, ch.len())?;
        self.per_channel("phases", &self.comb.phases, ch.len())?;
        self.per_channel("offsets", &self.comb.offsets, ch.len())?;
        if !(self.comb.integration_length > 0.0) {
            return Err(Error::Config("integration length must be > 0".into()));
        }
        if self.comb.photons < 0.0 {
            return Err(Error::Config("photon number must be >= 0".into()));
        }
        let t = &self.timing;
        if !(t.herald_length > 0.0 && t.herald_gap >= 0.0 && (0.0..=1.0).contains(&t.pi_infidelity)) {
            return Err(Error::Config("invalid timing settings".into()));
        }
        let comb = self.comb(dev, self.integration_length(dev)?, None)?;
        comb.validate(self.digitizer.sample_rate)?;
        comb.validate(self.simulation_rate)?;
        for label in [&self.crosstalk.victim, &self.crosstalk.aggressor] {
            if dev.channel_index(label).is_none() {
                return Err(Error::Config(format!("crosstalk refers to unknown channel '{label}'")));
            }
        }
        let j = &self.jumps;
        if !(j.trace_bin > 0.0 && j.window > j.trace_bin && j.min_dwell >= 1) {
            return Err(Error::Config("invalid jump plan".into()));
        }
        if self.chi_calibration.photons.len() < 2 {
            return Err(Error::Config("chi calibration needs at least two photon settings".into()));
        }
        if !(self.spectroscopy.points >= 5 && self.spectroscopy.span_kappas > 0.0) {
            return Err(Error::Config("invalid spectroscopy plan".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_match_code() {
        assert_eq!(ExperimentConfig::shipped(), ExperimentConfig::default());
    }

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate(&DeviceConfig::table1()).unwrap();
        assert_eq!(cfg.integration_length(&DeviceConfig::table1()).unwrap(), 1.0);
    }

    #[test]
    fn default_tones_hold_target_photons() {
        let dev = DeviceConfig::table1();
        let cfg = ExperimentConfig::default();
        let amps = cfg.tone_amplitudes(&dev, None).unwrap();
        for (j, a) in amps.iter().enumerate() {
            let c = &dev.channels[j];
            let chi = dispersive_shift(c).unwrap();
            let n = crate::feedline::steady_state_photons(c, *a, chi);
            assert!((n - 2.5).abs() < 1e-9, "{n}");
        }
    }

    #[test]
    fn experiment_names_roundtrip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("nope".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn unknown_channel_rejected() {
        let cfg = ExperimentConfig {
            comb: CombSettings {
                channels: Some(vec!["Q9".into()]),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(cfg.validate(&DeviceConfig::table1()), Err(Error::Config(_))));
    }

    #[test]
    fn zero_shots_rejected() {
        let cfg = ExperimentConfig { shots: 0, ..Default::default() };
        assert!(cfg.validate(&DeviceConfig::table1()).is_err());
    }
}
