//! Broadband parametric amplifier and digitizer.

use crate::feedline::ComplexWaveform;
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmplifierConfig {
    /// GHz
    pub pump_freq: f64,
    pub peak_gain_db: f64,
    /// full width between the half-gain (in dB) points, MHz
    pub bandwidth: f64,
    pub rolloff_order: u32,
    /// input-referred quantum efficiency η ∈ (0, 1]
    pub efficiency: f64,
    /// √(photons/μs); `None` disables compression
    pub saturation_flux: Option<f64>,
    /// (GHz, dB) nodes with strictly increasing frequency
    pub gain_table: Option<Vec<(f64, f64)>>,
    /// disables the added noise (formally η → ∞)
    pub noiseless: bool,
}

impl Default for AmplifierConfig {
    fn default() -> Self {
        Self {
            pump_freq: 5.984,
            peak_gain_db: 20.0,
            bandwidth: 380.0,
            rolloff_order: 1,
            efficiency: 0.35,
            saturation_flux: None,
            gain_table: None,
            noiseless: false,
        }
    }
}

impl AmplifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_gain_db >= 0.0) {
            return Err(Error::Config(format!("peak gain {} dB must be >= 0", self.peak_gain_db)));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::Config(format!("amplifier bandwidth {} MHz must be > 0", self.bandwidth)));
        }
        if self.rolloff_order < 1 {
            return Err(Error::Config("rolloff order must be >= 1".into()));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::Config(format!("efficiency {} outside (0, 1]", self.efficiency)));
        }
        if let Some(s) = self.saturation_flux {
            if !(s > 0.0) {
                return Err(Error::Config(format!("saturation flux {s} must be > 0")));
            }
        }
        if let Some(t) = &self.gain_table {
            if t.len() < 2 {
                return Err(Error::Config("gain table needs at least two nodes".into()));
            }
            if t.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::Config("gain table frequencies must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    /// Per-quadrature noise variance per sample at `sample_rate`, or 0 when noiseless.
    pub fn noise_variance(&self, sample_rate: f64) -> f64 {
        if self.noiseless {
            0.0
        } else {
            sample_rate / (4.0 * self.efficiency)
        }
    }

    /// Reads a two-column `freq_GHz,gain_dB` CSV; a non-numeric first line is a header.
    pub fn load_gain_table(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
        let text = std::fs::read_to_string(path.as_ref())?;
        parse_gain_table(&text)
    }
}

pub fn parse_gain_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut nodes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let parsed = match (cols.next(), cols.next()) {
            (Some(f), Some(g)) => f.parse::<f64>().ok().zip(g.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(node) => nodes.push(node),
            None if i == 0 => continue,
            None => return Err(Error::Config(format!("gain table line {}: expected freq_GHz,gain_dB", i + 1))),
        }
    }
    if nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Config("gain table frequencies must be strictly increasing".into()));
    }
    if nodes.len() < 2 {
        return Err(Error::Config("gain table needs at least two nodes".into()));
    }
    Ok(nodes)
}

/// Gain in dB at `freq` GHz.
pub fn gain_db(amp: &AmplifierConfig, freq: f64) -> f64 {
    if let Some(table) = &amp.gain_table {
        return interpolate(table, freq);
    }
    let x = 2.0 * (freq - amp.pump_freq) * 1e3 / amp.bandwidth;
    amp.peak_gain_db / (1.0 + x.powi(2 * amp.rolloff_order as i32))
}

/// Linear power gain at `freq` GHz.
pub fn gain_profile(amp: &AmplifierConfig, freq: f64) -> f64 {
    10f64.powf(gain_db(amp, freq) / 10.0)
}

/// Linear in dB between nodes, clamped to the end values outside the table.
fn interpolate(table: &[(f64, f64)], f: f64) -> f64 {
    let last = table.len() - 1;
    if f <= table[0].0 {
        return table[0].1;
    }
    if f >= table[last].0 {
        return table[last].1;
    }
    let i = table.partition_point(|&(x, _)| x <= f) - 1;
    let (x0, y0) = table[i];
    let (x1, y1) = table[i + 1];
    y0 + (y1 - y0) * (f - x0) / (x1 - x0)
}

fn soft_compress(a: Complex64, sat: f64) -> Complex64 {
    let r = a.norm() / sat;
    a / (1.0 + r * r).sqrt()
}

/// Frequency-domain amplitude gain √G(f) for a fixed record length.
///
/// The filter is circular over the record; with the default profile the
/// gain varies slowly on the scale of a bin so the wrap-around is negligible.
pub struct GainFilter {
    amp: AmplifierConfig,
    len: usize,
    sample_rate: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// √G per FFT bin, already divided by `len`
    weights: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl GainFilter {
    pub fn new(amp: &AmplifierConfig, carrier: f64, len: usize, sample_rate: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let weights = (0..len)
            .map(|k| {
                let kk = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
                let f = carrier + kk * sample_rate / len as f64 * 1e-3;
                gain_profile(amp, f).sqrt() / len as f64
            })
            .collect();
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            amp: amp.clone(),
            len,
            sample_rate,
            forward,
            inverse,
            weights,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// Noise, compression and gain, in place.
    pub fn amplify<R: Rng + ?Sized>(&mut self, wf: &mut ComplexWaveform, rng: &mut R) {
        assert_eq!(wf.len(), self.len, "record length differs from the planned filter");
        assert!((wf.sample_rate - self.sample_rate).abs() < 1e-9);
        let var = self.amp.noise_variance(self.sample_rate);
        if var > 0.0 {
            let sd = var.sqrt();
            for s in wf.samples.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *s += Complex64::new(re * sd, im * sd);
            }
        }
        self.apply_linear(wf);
    }

    /// Compression and gain without added noise.
    pub fn apply_linear(&mut self, wf: &mut ComplexWaveform) {
        assert_eq!(wf.len(), self.len, "record length differs from the planned filter");
        if let Some(sat) = self.amp.saturation_flux {
            for s in wf.samples.iter_mut() {
                *s = soft_compress(*s, sat);
            }
        }
        self.apply_gain(&mut wf.samples);
    }

    fn apply_gain(&mut self, x: &mut [Complex64]) {
        if self.len == 0 {
            return;
        }
        self.forward.process_with_scratch(x, &mut self.scratch);
        for (v, w) in x.iter_mut().zip(&self.weights) {
            *v *= *w;
        }
        self.inverse.process_with_scratch(x, &mut self.scratch);
    }
}

/// One-shot convenience wrapper around [`GainFilter`].
pub fn amplify<R: Rng + ?Sized>(amp: &AmplifierConfig, carrier: f64, input: &ComplexWaveform, rng: &mut R) -> ComplexWaveform {
    let mut out = input.clone();
    GainFilter::new(amp, carrier, input.len(), input.sample_rate).amplify(&mut out, rng);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DigitizerConfig {
    /// MHz
    pub sample_rate: f64,
    /// per-quadrature standard deviation per output sample, √(photons/μs)
    pub adc_noise_flux: f64,
}

impl Default for DigitizerConfig {
    fn default() -> Self {
        Self {
            sample_rate: 500.0,
            adc_noise_flux: 0.0,
        }
    }
}

impl DigitizerConfig {
    pub fn decimation(&self, input_rate: f64) -> Result<usize> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config(format!("digitizer rate {} MHz must be > 0", self.sample_rate)));
        }
        let ratio = input_rate / self.sample_rate;
        let d = ratio.round();
        if d < 1.0 || (ratio - d).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "digitizer rate {} MHz is not an integer divisor of the simulation rate {} MHz",
                self.sample_rate, input_rate
            )));
        }
        Ok(d as usize)
    }
}

/// Block-average decimation plus optional ADC noise.
///
/// The output sample time is the centre of each averaged block.
pub fn digitize<R: Rng + ?Sized>(dig: &DigitizerConfig, input: &ComplexWaveform, rng: &mut R) -> Result<ComplexWaveform> {
    let d = dig.decimation(input.sample_rate)?;
    let mut out = if d == 1 {
        input.clone()
    } else {
        let n = input.len() / d;
        let samples = input
            .samples
            .chunks_exact(d)
            .take(n)
            .map(|c| c.iter().sum::<Complex64>() / d as f64)
            .collect();
        ComplexWaveform {
            samples,
            sample_rate: dig.sample_rate,
            t0: input.t0 + (d as f64 - 1.0) / (2.0 * input.sample_rate),
        }
    };
    if dig.adc_noise_flux > 0.0 {
        let sd = dig.adc_noise_flux;
        for s in out.samples.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *s += Complex64::new(re * sd, im * sd);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noiseless() -> AmplifierConfig {
        AmplifierConfig {
            noiseless: true,
            ..Default::default()
        }
    }

    fn tone(freq: f64, amp: f64, len: usize, fs: f64) -> ComplexWaveform {
        ComplexWaveform {
            samples: (0..len).map(|n| Complex64::from_polar(amp, 2.0 * PI * freq * n as f64 / fs)).collect(),
            sample_rate: fs,
            t0: 0.0,
        }
    }

    #[test]
    fn gain_profile_points() {
        let a = AmplifierConfig::default();
        assert!((gain_profile(&a, 5.984) - 100.0).abs() < 1e-9);
        assert!((gain_profile(&a, 5.984 + 0.190) - 10.0).abs() < 1e-9);
        assert!((gain_profile(&a, 5.984 - 0.190) - 10.0).abs() < 1e-9);
        assert!((gain_profile(&a, 500.0) - 1.0).abs() < 1e-6);
        for order in 1..4 {
            let a = AmplifierConfig { rolloff_order: order, ..Default::default() };
            assert!(gain_profile(&a, 6.172) < gain_profile(&a, 5.984));
        }
    }

    #[test]
    fn gain_table_reproduces_nodes() {
        let table = vec![(5.7, 3.0), (5.85, 14.0), (5.98, 20.2), (6.1, 17.5), (6.3, 4.0)];
        let a = AmplifierConfig { gain_table: Some(table.clone()), ..Default::default() };
        for &(f, g) in &table {
            assert!((gain_db(&a, f) - g).abs() < 1e-12);
        }
        assert!((gain_db(&a, 5.915) - 17.1).abs() < 1e-9);
    }

    #[test]
    fn gain_table_csv() {
        let t = parse_gain_table("freq_GHz,gain_dB\n5.8,10\n5.9,15\n6.0,20\n").unwrap();
        assert_eq!(t, vec![(5.8, 10.0), (5.9, 15.0), (6.0, 20.0)]);
        assert!(parse_gain_table("5.9,1\n5.8,2\n").is_err());
    }

    #[test]
    fn noise_variance_matches_formula() {
        let a = AmplifierConfig { efficiency: 1.0, peak_gain_db: 0.0, ..Default::default() };
        let n = 1 << 20;
        let zero = ComplexWaveform::zeros(n, 1000.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = amplify(&a, 5.984, &zero, &mut rng);
        let vr = out.samples.iter().map(|s| s.re * s.re).sum::<f64>() / n as f64;
        let vi = out.samples.iter().map(|s| s.im * s.im).sum::<f64>() / n as f64;
        assert!((vr / 250.0 - 1.0).abs() < 0.01, "{vr}");
        assert!((vi / 250.0 - 1.0).abs() < 0.01, "{vi}");
        // white: lag-1 autocorrelation
        let lag1 = out.samples.windows(2).map(|w| (w[0].conj() * w[1]).re).sum::<f64>() / n as f64;
        assert!(lag1.abs() < 0.01 * (vr + vi));
    }

    #[test]
    fn noise_scales_with_gain_in_flat_band() {
        let a = AmplifierConfig { efficiency: 1.0, bandwidth: 1e9, ..Default::default() };
        let n = 1 << 18;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let out = amplify(&a, 5.984, &ComplexWaveform::zeros(n, 1000.0, 0.0), &mut rng);
        let vr = out.samples.iter().map(|s| s.re * s.re).sum::<f64>() / n as f64;
        assert!((vr / (250.0 * 100.0) - 1.0).abs() < 0.02, "{vr}");
    }

    #[test]
    fn noiseless_is_linear() {
        let a = noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = tone(37.0, 1.3, 512, 500.0);
        let y1 = amplify(&a, 5.985, &x, &mut rng);
        let y2 = amplify(&a, 5.985, &x.scaled(Complex64::new(0.0, 2.5)), &mut rng);
        for (u, v) in y1.samples.iter().zip(&y2.samples) {
            assert!((u * Complex64::new(0.0, 2.5) - v).norm() < 1e-10);
        }
    }

    #[test]
    fn bin_centred_tone_gets_its_gain() {
        let a = noiseless();
        let fs = 500.0;
        let n = 500;
        let f = 187.0;
        let x = tone(f, 1.0, n, fs);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = amplify(&a, 5.985, &x, &mut rng);
        let g = gain_profile(&a, 5.985 + f * 1e-3).sqrt();
        for (u, v) in x.samples.iter().zip(&y.samples) {
            assert!((u * g - v).norm() < 1e-9);
        }
    }

    #[test]
    fn saturation_compresses() {
        let a = AmplifierConfig {
            noiseless: true,
            peak_gain_db: 0.0,
            saturation_flux: Some(1.0),
            ..Default::default()
        };
        let x = ComplexWaveform {
            samples: vec![Complex64::new(3.0, 4.0); 64],
            sample_rate: 500.0,
            t0: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = amplify(&a, 5.984, &x, &mut rng);
        let expect = 5.0 / 26f64.sqrt();
        assert!((y.samples[10].norm() - expect).abs() < 1e-9);
    }

    #[test]
    fn digitize_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = tone(10.0, 1.0, 100, 500.0);
        let dig = DigitizerConfig::default();
        assert_eq!(digitize(&dig, &x, &mut rng).unwrap(), x);
        let c = ComplexWaveform {
            samples: vec![Complex64::new(0.3, -0.2); 100],
            sample_rate: 1000.0,
            t0: 0.0,
        };
        let y = digitize(&dig, &c, &mut rng).unwrap();
        assert_eq!(y.len(), 50);
        assert!(y.samples.iter().all(|s| (s - Complex64::new(0.3, -0.2)).norm() < 1e-15));
    }

    #[test]
    fn decimated_tone_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = tone(100.0, 1.0, 4000, 1000.0);
        let dig = DigitizerConfig { sample_rate: 250.0, adc_noise_flux: 0.0 };
        let y = digitize(&dig, &x, &mut rng).unwrap();
        // block average of D samples: |Σ e^{iωn/fs}|/D = sin(πfD/fs)/(D·sin(πf/fs))
        let d = 4.0;
        let expect = (PI * 100.0 * d / 1000.0).sin() / (d * (PI * 100.0 / 1000.0).sin());
        for s in &y.samples {
            assert!((s.norm() / expect - 1.0).abs() < 0.01);
        }
        // phase is that of the block centre
        let t = y.time(3);
        let phase = (y.samples[3] / Complex64::from_polar(1.0, 2.0 * PI * 100.0 * t)).arg();
        assert!(phase.abs() < 1e-9);
    }

    #[test]
    fn non_integer_decimation_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = ComplexWaveform::zeros(30, 1000.0, 0.0);
        let dig = DigitizerConfig { sample_rate: 300.0, adc_noise_flux: 0.0 };
        assert!(matches!(digitize(&dig, &x, &mut rng), Err(Error::Config(_))));
    }
}
