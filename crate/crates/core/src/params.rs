//! Device parameters and the closed-form dispersive quantities derived from them.
//!
//! Frequencies are stored as ordinary frequencies: cavity and qubit
//! frequencies in GHz, linewidths, couplings and anharmonicities in MHz,
//! coherence times in μs. Conversion to angular rates happens at the point of
//! use, via [`angular`].

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

/// Detunings closer than this (MHz) to zero or to −α are treated as straddling.
pub const STRADDLING_TOLERANCE_MHZ: f64 = 1.0;

/// Internal cavity loss assumed when only the loaded linewidth is known (MHz).
pub const DEFAULT_KAPPA_INT_MHZ: f64 = 0.1;

pub const DEFAULT_THERMAL_POP: f64 = 0.04;

pub const DEFAULT_CARRIER_GHZ: f64 = 5.985;

const TABLE1_JSON: &str = include_str!("../data/table1.json");

/// Converts an ordinary rate in MHz into an angular rate in rad/μs.
#[inline]
pub fn angular(mhz: f64) -> f64 {
    2.0 * PI * mhz
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitState {
    G,
    E,
}

impl QubitState {
    pub fn flipped(self) -> Self {
        match self {
            QubitState::G => QubitState::E,
            QubitState::E => QubitState::G,
        }
    }

    pub fn is_excited(self) -> bool {
        self == QubitState::E
    }
}

impl fmt::Display for QubitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QubitState::G => "g",
            QubitState::E => "e",
        })
    }
}

/// One qubit–cavity pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitCavityConfig {
    pub label: String,
    /// GHz
    pub cavity_freq: f64,
    /// MHz
    pub kappa_ext: f64,
    /// MHz
    #[serde(default = "default_kappa_int")]
    pub kappa_int: f64,
    /// GHz
    pub qubit_freq: f64,
    /// MHz, negative for a transmon
    pub anharmonicity: f64,
    /// MHz
    pub coupling_g: f64,
    /// μs
    pub t1: f64,
    /// μs
    pub t2_ramsey: f64,
    /// μs
    pub t2_echo: f64,
    #[serde(default = "default_thermal_pop")]
    pub thermal_excited_pop: f64,
}

fn default_kappa_int() -> f64 {
    DEFAULT_KAPPA_INT_MHZ
}

fn default_thermal_pop() -> f64 {
    DEFAULT_THERMAL_POP
}

impl QubitCavityConfig {
    /// Loaded linewidth κ_ext + κ_int in MHz.
    pub fn kappa_total(&self) -> f64 {
        self.kappa_ext + self.kappa_int
    }

    /// Qubit–cavity detuning Δ = ν_q − ν_c in MHz.
    pub fn detuning(&self) -> f64 {
        (self.qubit_freq - self.cavity_freq) * 1e3
    }

    pub fn dispersive_shift(&self) -> Result<f64> {
        dispersive_shift(self)
    }

    pub fn pulled_resonance(&self, state: QubitState) -> Result<f64> {
        pulled_resonance(self, state)
    }
}

/// Dispersive shift χ = g²α / (Δ(Δ+α)) in MHz, sign preserved.
pub fn dispersive_shift(cfg: &QubitCavityConfig) -> Result<f64> {
    let delta = cfg.detuning();
    let alpha = cfg.anharmonicity;
    if delta.abs() < STRADDLING_TOLERANCE_MHZ || (delta + alpha).abs() < STRADDLING_TOLERANCE_MHZ {
        return Err(Error::StraddlingRegime {
            channel: cfg.label.clone(),
            detuning_mhz: delta,
        });
    }
    let g = cfg.coupling_g;
    Ok(g * g * alpha / (delta * (delta + alpha)))
}

/// Cavity resonance (GHz) with the qubit in `state`: ν_c + χ for g, ν_c − χ for e.
pub fn pulled_resonance(cfg: &QubitCavityConfig, state: QubitState) -> Result<f64> {
    let chi = dispersive_shift(cfg)?;
    Ok(match state {
        QubitState::G => cfg.cavity_freq + chi * 1e-3,
        QubitState::E => cfg.cavity_freq - chi * 1e-3,
    })
}

/// The full device: channels sharing one feedline and one carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Shared LO / carrier frequency in GHz.
    #[serde(default = "default_carrier")]
    pub carrier_freq: f64,
    pub channels: Vec<QubitCavityConfig>,
    /// ξ[j][k]: amplitude ratio of the drive intended for channel k that reaches
    /// cavity j. Identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosstalk_leakage: Option<Vec<Vec<f64>>>,
}

fn default_carrier() -> f64 {
    DEFAULT_CARRIER_GHZ
}

impl DeviceConfig {
    /// The four-qubit device bundled with the crate.
    pub fn table1() -> Self {
        serde_json::from_str(TABLE1_JSON).expect("bundled table1.json is valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Config(format!("cannot read device file {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json_str(&text)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.label == label)
    }

    pub fn leakage(&self, victim: usize, source: usize) -> f64 {
        match &self.crosstalk_leakage {
            Some(m) => m
                .get(victim)
                .and_then(|row| row.get(source))
                .copied()
                .unwrap_or(0.0),
            None => {
                if victim == source {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Sets ξ[victim][source], materializing the identity matrix if needed.
    pub fn set_leakage(&mut self, victim: usize, source: usize, value: f64) {
        let n = self.channels.len();
        let m = self.crosstalk_leakage.get_or_insert_with(|| {
            (0..n)
                .map(|j| (0..n).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
                .collect()
        });
        m[victim][source] = value;
    }

    /// Tone offset (MHz) that places a tone on the bare cavity frequency of `channel`.
    pub fn cavity_offset(&self, channel: usize) -> f64 {
        (self.channels[channel].cavity_freq - self.carrier_freq) * 1e3
    }

    /// Smallest spacing between cavity frequencies, MHz.
    pub fn min_cavity_spacing(&self) -> Option<f64> {
        let mut freqs: Vec<f64> = self.channels.iter().map(|c| c.cavity_freq).collect();
        freqs.sort_by(f64::total_cmp);
        freqs
            .windows(2)
            .map(|w| (w[1] - w[0]) * 1e3)
            .min_by(f64::total_cmp)
    }
}

/// Band within which pulled resonances must lie (GHz).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyBand {
    pub low: f64,
    pub high: f64,
}

impl FrequencyBand {
    pub fn centered(center_ghz: f64, width_mhz: f64) -> Self {
        let half = width_mhz * 0.5e-3;
        Self {
            low: center_ghz - half,
            high: center_ghz + half,
        }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.low && f <= self.high
    }
}

/// Optional context for [`validate_device`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ValidationContext {
    pub amplifier_band: Option<FrequencyBand>,
    /// Digitizer sample rate, MHz.
    pub sample_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonPositiveKappaExt { channel: String, value: f64 },
    NegativeKappaInt { channel: String, value: f64 },
    NotOverCoupled { channel: String, kappa_ext: f64, kappa_int: f64 },
    NonNegativeAnharmonicity { channel: String, value: f64 },
    QubitAboveCavity { channel: String },
    CoherenceBound { channel: String, which: &'static str, t2: f64, t1: f64 },
    NonPositiveTime { channel: String, which: &'static str, value: f64 },
    ThermalPopulationRange { channel: String, value: f64 },
    Straddling { channel: String, detuning_mhz: f64 },
    DuplicateCavityFrequency { first: String, second: String },
    SpacingTooSmall { spacing_mhz: f64, max_linewidth_mhz: f64 },
    DuplicateLabel { label: String },
    OutsideAmplifierBand { channel: String, state: QubitState, freq_ghz: f64 },
    OffsetAliases { channel: String, offset_mhz: f64, sample_rate_mhz: f64 },
    CrosstalkShape { expected: usize },
    CrosstalkEntry { victim: usize, source: usize, value: f64 },
    NoChannels,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonPositiveKappaExt { channel, value } => write!(f, "{channel}: kappa_ext = {value} must be > 0"),
            NegativeKappaInt { channel, value } => write!(f, "{channel}: kappa_int = {value} must be >= 0"),
            NotOverCoupled { channel, kappa_ext, kappa_int } => {
                write!(f, "{channel}: not over-coupled (kappa_ext {kappa_ext} <= kappa_int {kappa_int})")
            }
            NonNegativeAnharmonicity { channel, value } => write!(f, "{channel}: anharmonicity {value} must be < 0"),
            QubitAboveCavity { channel } => write!(f, "{channel}: qubit frequency must be below the cavity"),
            CoherenceBound { channel, which, t2, t1 } => write!(f, "{channel}: {which} = {t2} exceeds 2*t1 = {}", 2.0 * t1),
            NonPositiveTime { channel, which, value } => write!(f, "{channel}: {which} = {value} must be > 0"),
            ThermalPopulationRange { channel, value } => {
                write!(f, "{channel}: thermal_excited_pop = {value} outside [0, 0.5)")
            }
            Straddling { channel, detuning_mhz } => write!(f, "{channel}: detuning {detuning_mhz} MHz is straddling"),
            DuplicateCavityFrequency { first, second } => write!(f, "{first} and {second} share a cavity frequency"),
            SpacingTooSmall { spacing_mhz, max_linewidth_mhz } => write!(
                f,
                "minimum cavity spacing {spacing_mhz:.3} MHz is not > 10x the largest linewidth {max_linewidth_mhz:.3} MHz"
            ),
            DuplicateLabel { label } => write!(f, "duplicate channel label {label}"),
            OutsideAmplifierBand { channel, state, freq_ghz } => {
                write!(f, "{channel}: pulled resonance ({state}) at {freq_ghz:.6} GHz is outside the amplifier band")
            }
            OffsetAliases { channel, offset_mhz, sample_rate_mhz } => write!(
                f,
                "{channel}: offset {offset_mhz:.3} MHz is not below half the sample rate {sample_rate_mhz} MHz"
            ),
            CrosstalkShape { expected } => write!(f, "crosstalk_leakage must be {expected}x{expected}"),
            CrosstalkEntry { victim, source, value } => {
                write!(f, "crosstalk_leakage[{victim}][{source}] = {value} is invalid")
            }
            NoChannels => write!(f, "device has no channels"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Minimum cavity spacing in MHz, when at least two channels exist.
    pub min_spacing_mhz: Option<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Config(msgs.join("; ")))
        }
    }
}

/// Checks every device invariant and reports all violations found.
pub fn validate_device(dev: &DeviceConfig, ctx: &ValidationContext) -> ValidationReport {
    let mut v = Vec::new();
    if dev.channels.is_empty() {
        v.push(Violation::NoChannels);
    }
    for c in &dev.channels {
        let ch = || c.label.clone();
        if !(c.kappa_ext > 0.0) {
            v.push(Violation::NonPositiveKappaExt { channel: ch(), value: c.kappa_ext });
        }
        if !(c.kappa_int >= 0.0) {
            v.push(Violation::NegativeKappaInt { channel: ch(), value: c.kappa_int });
        }
        if c.kappa_ext <= c.kappa_int {
            v.push(Violation::NotOverCoupled {
                channel: ch(),
                kappa_ext: c.kappa_ext,
                kappa_int: c.kappa_int,
            });
        }
        if !(c.anharmonicity < 0.0) {
            v.push(Violation::NonNegativeAnharmonicity { channel: ch(), value: c.anharmonicity });
        }
        if !(c.qubit_freq < c.cavity_freq) {
            v.push(Violation::QubitAboveCavity { channel: ch() });
        }
        for (which, value) in [("t1", c.t1), ("t2_ramsey", c.t2_ramsey), ("t2_echo", c.t2_echo)] {
            if !(value > 0.0) {
                v.push(Violation::NonPositiveTime { channel: ch(), which, value });
            }
        }
        for (which, t2) in [("t2_ramsey", c.t2_ramsey), ("t2_echo", c.t2_echo)] {
            if t2 > 2.0 * c.t1 {
                v.push(Violation::CoherenceBound { channel: ch(), which, t2, t1: c.t1 });
            }
        }
        if !(0.0..0.5).contains(&c.thermal_excited_pop) {
            v.push(Violation::ThermalPopulationRange { channel: ch(), value: c.thermal_excited_pop });
        }
        match pulled_resonance(c, QubitState::G).and_then(|g| Ok((g, pulled_resonance(c, QubitState::E)?))) {
            Err(_) => v.push(Violation::Straddling { channel: ch(), detuning_mhz: c.detuning() }),
            Ok((fg, fe)) => {
                if let Some(band) = ctx.amplifier_band {
                    for (state, f) in [(QubitState::G, fg), (QubitState::E, fe)] {
                        if !band.contains(f) {
                            v.push(Violation::OutsideAmplifierBand { channel: ch(), state, freq_ghz: f });
                        }
                    }
                }
            }
        }
        if let Some(fs) = ctx.sample_rate {
            let offset = (c.cavity_freq - dev.carrier_freq) * 1e3;
            if offset.abs() >= fs / 2.0 {
                v.push(Violation::OffsetAliases { channel: ch(), offset_mhz: offset, sample_rate_mhz: fs });
            }
        }
    }

    for (i, a) in dev.channels.iter().enumerate() {
        for b in &dev.channels[i + 1..] {
            if a.label == b.label {
                v.push(Violation::DuplicateLabel { label: a.label.clone() });
            }
            if a.cavity_freq == b.cavity_freq {
                v.push(Violation::DuplicateCavityFrequency {
                    first: a.label.clone(),
                    second: b.label.clone(),
                });
            }
        }
    }

    let min_spacing = dev.min_cavity_spacing();
    if let Some(spacing) = min_spacing {
        let max_lw = dev.channels.iter().map(|c| c.kappa_total()).fold(0.0, f64::max);
        if spacing > 0.0 && spacing <= 10.0 * max_lw {
            v.push(Violation::SpacingTooSmall { spacing_mhz: spacing, max_linewidth_mhz: max_lw });
        }
    }

    if let Some(m) = &dev.crosstalk_leakage {
        let n = dev.channels.len();
        if m.len() != n || m.iter().any(|row| row.len() != n) {
            v.push(Violation::CrosstalkShape { expected: n });
        } else {
            for (j, row) in m.iter().enumerate() {
                for (k, &x) in row.iter().enumerate() {
                    let bad = if j == k { x != 1.0 } else { !(x >= 0.0) || !x.is_finite() };
                    if bad {
                        v.push(Violation::CrosstalkEntry { victim: j, source: k, value: x });
                    }
                }
            }
        }
    }

    ValidationReport {
        violations: v,
        min_spacing_mhz: min_spacing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(label: &str) -> QubitCavityConfig {
        DeviceConfig::table1()
            .channels
            .into_iter()
            .find(|c| c.label == label)
            .unwrap()
    }

    /// Second-order perturbation theory on the lowest levels of the
    /// Jaynes–Cummings ladder with a three-level transmon. Returns the
    /// cavity frequency with the qubit in g and in e (MHz, relative to ν_c).
    fn perturbative_pulls(g: f64, delta: f64, alpha: f64) -> (f64, f64) {
        // E(g,n) shift from |e,n-1>: n g² / (−Δ)
        // E(e,n) shift from |g,n+1>: (n+1) g² / Δ, from |f,n-1>: 2 n g² / (−Δ−α)
        let e_g = |n: f64| n * g * g / (-delta);
        let e_e = |n: f64| (n + 1.0) * g * g / delta + 2.0 * n * g * g / (-delta - alpha);
        (e_g(1.0) - e_g(0.0), e_e(1.0) - e_e(0.0))
    }

    #[test]
    fn table1_rows_chi() {
        let chi1 = q("Q1").dispersive_shift().unwrap();
        let chi4 = q("Q4").dispersive_shift().unwrap();
        assert!((chi1 - (-0.9907)).abs() < 1e-3, "{chi1}");
        assert!((chi4 - (-1.8301)).abs() < 1e-3, "{chi4}");
    }

    #[test]
    fn chi_matches_perturbation_oracle() {
        for c in DeviceConfig::table1().channels {
            let (pull_g, pull_e) = perturbative_pulls(c.coupling_g, c.detuning(), c.anharmonicity);
            let oracle = (pull_e - pull_g) / 2.0;
            let chi = c.dispersive_shift().unwrap();
            assert!((chi - oracle).abs() < 1e-12 * chi.abs().max(1.0), "{}: {chi} vs {oracle}", c.label);
            // The simulator's state labelling is mirrored relative to the ladder; only the
            // separation is physical.
            let sep = (c.pulled_resonance(QubitState::E).unwrap() - c.pulled_resonance(QubitState::G).unwrap()) * 1e3;
            assert!((sep.abs() - (pull_e - pull_g).abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_coupling_gives_zero_chi() {
        let mut c = q("Q2");
        c.coupling_g = 0.0;
        assert_eq!(c.dispersive_shift().unwrap(), 0.0);
        assert_eq!(c.pulled_resonance(QubitState::G).unwrap(), c.cavity_freq);
        assert_eq!(c.pulled_resonance(QubitState::E).unwrap(), c.cavity_freq);
    }

    #[test]
    fn straddling_is_rejected() {
        let mut c = q("Q1");
        c.qubit_freq = c.cavity_freq + 0.0005;
        assert!(matches!(c.dispersive_shift(), Err(Error::StraddlingRegime { .. })));
        let mut c = q("Q1");
        c.qubit_freq = c.cavity_freq - c.anharmonicity * 1e-3;
        assert!(matches!(c.dispersive_shift(), Err(Error::StraddlingRegime { .. })));
    }

    #[test]
    fn pulled_resonances_q1() {
        let mut c = q("Q1");
        // Pin χ = −0.991 MHz exactly through g.
        let target = -0.991;
        let chi0 = c.dispersive_shift().unwrap();
        c.coupling_g *= (target / chi0).sqrt();
        let g = c.pulled_resonance(QubitState::G).unwrap();
        let e = c.pulled_resonance(QubitState::E).unwrap();
        assert!((g - 5.855009).abs() < 1e-9, "{g}");
        assert!((e - 5.856991).abs() < 1e-9, "{e}");
    }

    #[test]
    fn table1_invariants_hold() {
        let dev = DeviceConfig::table1();
        let ctx = ValidationContext {
            amplifier_band: Some(FrequencyBand::centered(5.984, 380.0)),
            sample_rate: Some(500.0),
        };
        let report = validate_device(&dev, &ctx);
        assert!(report.is_valid(), "{:?}", report.violations);
        assert!(report.min_spacing_mhz.unwrap() > 10.0 * 8.4);
        for c in &dev.channels {
            let chi = c.dispersive_shift().unwrap();
            assert!(chi < 0.0 && (0.9..=1.9).contains(&chi.abs()), "{}: {chi}", c.label);
            assert!(c.kappa_ext > c.kappa_int);
        }
        let offsets: Vec<f64> = (0..dev.len()).map(|i| dev.cavity_offset(i).round()).collect();
        assert_eq!(offsets, vec![-129.0, -19.0, 67.0, 187.0]);
    }

    #[test]
    fn duplicate_frequency_violation() {
        let mut dev = DeviceConfig::table1();
        dev.channels[1].cavity_freq = dev.channels[0].cavity_freq;
        let report = validate_device(&dev, &ValidationContext::default());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DuplicateCavityFrequency { .. })));
    }

    #[test]
    fn thermal_population_violation() {
        let mut dev = DeviceConfig::table1();
        dev.channels[2].thermal_excited_pop = 0.6;
        let report = validate_device(&dev, &ValidationContext::default());
        assert_eq!(
            report.violations,
            vec![Violation::ThermalPopulationRange { channel: "Q3".into(), value: 0.6 }]
        );
    }

    #[test]
    fn band_violation_is_reported() {
        let dev = DeviceConfig::table1();
        let ctx = ValidationContext {
            amplifier_band: Some(FrequencyBand::centered(5.984, 100.0)),
            sample_rate: None,
        };
        let report = validate_device(&dev, &ctx);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::OutsideAmplifierBand { .. })));
    }

    proptest! {
        #[test]
        fn chi_scales_quadratically_in_g(g in 1.0f64..300.0, scale in 0.1f64..3.0) {
            let mut c = q("Q3");
            c.coupling_g = g;
            let base = c.dispersive_shift().unwrap();
            c.coupling_g = g * scale;
            let scaled = c.dispersive_shift().unwrap();
            prop_assert!((scaled - scale * scale * base).abs() <= 1e-12 * scaled.abs().max(1e-12));
        }

        #[test]
        fn pulled_separation_is_two_chi(row in 0usize..4, g in 10.0f64..200.0) {
            let mut c = DeviceConfig::table1().channels[row].clone();
            c.coupling_g = g;
            let chi = c.dispersive_shift().unwrap();
            let sep = (c.pulled_resonance(QubitState::G).unwrap() - c.pulled_resonance(QubitState::E).unwrap()) * 1e3;
            prop_assert!((sep - 2.0 * chi).abs() < 1e-9);
        }
    }
}
