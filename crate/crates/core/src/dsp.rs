//! Software demodulation of digitized records.

use crate::feedline::{sample_count, ComplexWaveform};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Boxcar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemodSpec {
    pub channel: usize,
    /// MHz relative to the carrier
    pub offset_freq: f64,
    /// μs
    pub integration_start: f64,
    /// μs
    pub integration_length: f64,
    /// μs; `None` means a single bin spanning the window
    pub trace_bin: Option<f64>,
    #[serde(default)]
    pub window: Window,
}

impl DemodSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.integration_length > 0.0) {
            return Err(Error::Config(format!("integration length {} μs must be > 0", self.integration_length)));
        }
        if let Some(bin) = self.trace_bin {
            let k = self.integration_length / bin;
            if !(bin > 0.0) || (k - k.round()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "trace bin {bin} μs does not divide the integration length {} μs",
                    self.integration_length
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemodResult {
    pub channel: usize,
    /// in √(photons/μs)·μs
    pub integrated_point: Complex64,
    /// bin means
    pub trace: Vec<Complex64>,
    /// start time of the first bin, μs
    pub trace_t0: f64,
    /// μs
    pub trace_bin: f64,
}

impl DemodResult {
    pub fn bin_start(&self, i: usize) -> f64 {
        self.trace_t0 + i as f64 * self.trace_bin
    }

    /// Writes `t,re,im,abs,arg` rows.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_us,re,im,abs,arg")?;
        for (i, z) in self.trace.iter().enumerate() {
            writeln!(w, "{:.6},{:.9e},{:.9e},{:.9e},{:.9}", self.bin_start(i), z.re, z.im, z.norm(), z.arg())?;
        }
        Ok(())
    }
}

/// Nearest positive integer multiple of 1/`min_spacing` (MHz) to `length` (μs).
pub fn snap_integration_length(length: f64, min_spacing: f64) -> f64 {
    if !(min_spacing > 0.0) {
        return length;
    }
    let k = (length * min_spacing).round().max(1.0);
    let snapped = k / min_spacing;
    // offsets derived from GHz values carry rounding noise; keep an already-commensurate length exact
    if (snapped - length).abs() <= 1e-9 * length {
        length
    } else {
        snapped
    }
}

/// Sample index range covered by `[start, start + length)`.
fn window_indices(wf: &ComplexWaveform, start: f64, length: f64) -> Result<(usize, usize)> {
    let fs = wf.sample_rate;
    let first = (start - wf.t0) * fs;
    let n0 = first.round();
    let count = sample_count(length, fs);
    let tol = 1e-6;
    if first < -tol || n0 as usize + count > wf.len() {
        return Err(Error::WindowOutOfRange {
            start,
            end: start + length,
            wf_start: wf.t0,
            wf_end: wf.t0 + wf.duration(),
        });
    }
    Ok((n0.max(0.0) as usize, count))
}

pub fn demodulate(wf: &ComplexWaveform, spec: &DemodSpec) -> Result<DemodResult> {
    spec.validate()?;
    let (n0, count) = window_indices(wf, spec.integration_start, spec.integration_length)?;
    let fs = wf.sample_rate;
    let dt = 1.0 / fs;
    let bin_len = match spec.trace_bin {
        Some(b) => sample_count(b, fs).max(1),
        None => count.max(1),
    };
    let w = -2.0 * PI * spec.offset_freq;
    let mut total = Complex64::new(0.0, 0.0);
    let mut trace = Vec::with_capacity(count / bin_len + 1);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut in_bin = 0;
    for n in n0..n0 + count {
        let p = wf.samples[n] * Complex64::cis(w * wf.time(n));
        total += p;
        acc += p;
        in_bin += 1;
        if in_bin == bin_len {
            trace.push(acc / bin_len as f64);
            acc = Complex64::new(0.0, 0.0);
            in_bin = 0;
        }
    }
    if in_bin > 0 {
        trace.push(acc / in_bin as f64);
    }
    Ok(DemodResult {
        channel: spec.channel,
        integrated_point: total * dt,
        trace,
        trace_t0: wf.time(n0),
        trace_bin: bin_len as f64 * dt,
    })
}

pub fn demodulate_all(wf: &ComplexWaveform, specs: &[DemodSpec]) -> Result<Vec<DemodResult>> {
    specs.iter().map(|s| demodulate(wf, s)).collect()
}

/// Demodulation with the reference phasors precomputed for a fixed record
/// layout, for use across many shots.
pub struct DemodBank {
    specs: Vec<DemodSpec>,
    n0: Vec<usize>,
    phasors: Vec<Vec<Complex64>>,
    t0: f64,
    sample_rate: f64,
    len: usize,
}

impl DemodBank {
    pub fn new(specs: &[DemodSpec], t0: f64, sample_rate: f64, len: usize) -> Result<Self> {
        let layout = ComplexWaveform::zeros(len, sample_rate, t0);
        let mut n0 = Vec::new();
        let mut phasors = Vec::new();
        for s in specs {
            s.validate()?;
            let (start, count) = window_indices(&layout, s.integration_start, s.integration_length)?;
            n0.push(start);
            let w = -2.0 * PI * s.offset_freq;
            phasors.push((start..start + count).map(|n| Complex64::cis(w * layout.time(n))).collect());
        }
        Ok(Self {
            specs: specs.to_vec(),
            n0,
            phasors,
            t0,
            sample_rate,
            len,
        })
    }

    /// Integrated points only, in spec order.
    pub fn integrate(&self, wf: &ComplexWaveform) -> Vec<Complex64> {
        debug_assert_eq!(wf.len(), self.len);
        debug_assert!((wf.t0 - self.t0).abs() < 1e-9 && (wf.sample_rate - self.sample_rate).abs() < 1e-9);
        let dt = 1.0 / self.sample_rate;
        self.phasors
            .iter()
            .zip(&self.n0)
            .map(|(ph, &n0)| ph.iter().zip(&wf.samples[n0..]).map(|(p, s)| p * s).sum::<Complex64>() * dt)
            .collect()
    }

    pub fn specs(&self) -> &[DemodSpec] {
        &self.specs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, amp: Complex64, duration: f64, fs: f64) -> ComplexWaveform {
        let n = sample_count(duration, fs);
        ComplexWaveform {
            samples: (0..n).map(|k| amp * Complex64::cis(2.0 * PI * freq * k as f64 / fs)).collect(),
            sample_rate: fs,
            t0: 0.0,
        }
    }

    fn spec(offset: f64, length: f64) -> DemodSpec {
        DemodSpec {
            channel: 0,
            offset_freq: offset,
            integration_start: 0.0,
            integration_length: length,
            trace_bin: None,
            window: Window::Boxcar,
        }
    }

    /// |Σ_n e^{i2πΔn/fs}|·Δt / τ for N samples: the sampled Dirichlet kernel.
    fn dirichlet_leak(delta: f64, n: usize, fs: f64) -> f64 {
        let x = PI * delta / fs;
        ((n as f64 * x).sin() / (n as f64 * x.sin())).abs()
    }

    #[test]
    fn matched_tone_integrates_to_amplitude_times_length() {
        let wf = tone(67.0, Complex64::new(0.8, 0.0), 1.0, 500.0);
        let r = demodulate(&wf, &spec(67.0, 1.0)).unwrap();
        assert!((r.integrated_point - Complex64::new(0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn integer_cycles_are_orthogonal() {
        let wf = tone(137.0, Complex64::new(1.0, 0.0), 1.0, 500.0);
        let r = demodulate(&wf, &spec(67.0, 1.0)).unwrap();
        assert!(r.integrated_point.norm() < 1e-12);
    }

    #[test]
    fn non_integer_leakage_matches_kernel() {
        let fs = 10_000.0;
        let tau = 0.9929;
        let wf = tone(70.0, Complex64::new(1.0, 0.0), tau, fs);
        let r = demodulate(&wf, &spec(0.0, tau)).unwrap();
        let n = sample_count(tau, fs);
        let t = n as f64 / fs;
        let leak = r.integrated_point.norm() / t;
        let oracle = dirichlet_leak(70.0, n, fs);
        assert!((leak - oracle).abs() < 1e-9, "{leak} {oracle}");
        assert!(leak < 5e-3);
        // continuous-time limit |sinc(π·70·τ)|
        let cont = ((PI * 70.0 * tau).sin() / (PI * 70.0 * tau)).abs();
        assert!((leak - cont).abs() < 1e-4);
    }

    #[test]
    fn trace_bins_average_to_point() {
        let wf = tone(10.0, Complex64::new(0.3, 0.4), 2.0, 500.0);
        let mut s = spec(3.0, 1.92);
        s.trace_bin = Some(0.048);
        let r = demodulate(&wf, &s).unwrap();
        assert_eq!(r.trace.len(), 40);
        let mean: Complex64 = r.trace.iter().sum::<Complex64>() / r.trace.len() as f64;
        assert!((mean * 1.92 - r.integrated_point).norm() < 1e-12);
    }

    #[test]
    fn window_out_of_range() {
        let wf = tone(0.0, Complex64::new(1.0, 0.0), 1.0, 500.0);
        let mut s = spec(0.0, 1.0);
        s.integration_start = 0.5;
        assert!(matches!(demodulate(&wf, &s), Err(Error::WindowOutOfRange { .. })));
    }

    #[test]
    fn empty_and_ordered() {
        let wf = tone(0.0, Complex64::new(1.0, 0.0), 1.0, 500.0);
        assert!(demodulate_all(&wf, &[]).unwrap().is_empty());
        let mut a = spec(0.0, 1.0);
        a.channel = 3;
        let mut b = spec(50.0, 1.0);
        b.channel = 1;
        let r = demodulate_all(&wf, &[a, b]).unwrap();
        assert_eq!((r[0].channel, r[1].channel), (3, 1));
    }

    #[test]
    fn snapped_length() {
        assert_eq!(snap_integration_length(1.0, 86.0), 1.0);
        assert!((snap_integration_length(1.0, 70.0) - 1.0).abs() < 1e-12);
        assert!((snap_integration_length(1.004, 80.0) - 1.0).abs() < 1e-12);
        assert!((snap_integration_length(0.001, 80.0) - 1.0 / 80.0).abs() < 1e-12);
    }

    #[test]
    fn bank_matches_direct() {
        let wf = tone(-19.0, Complex64::new(0.5, -0.2), 2.0, 500.0);
        let mut s = vec![spec(-19.0, 1.0), spec(67.0, 1.0)];
        s[1].integration_start = 1.0;
        let bank = DemodBank::new(&s, 0.0, 500.0, wf.len()).unwrap();
        let direct = demodulate_all(&wf, &s).unwrap();
        for (p, r) in bank.integrate(&wf).iter().zip(&direct) {
            assert!((p - r.integrated_point).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn linear_and_phase_equivariant(
            a in -2.0f64..2.0, b in -2.0f64..2.0, theta in -3.0f64..3.0,
            f1 in -200.0f64..200.0, f2 in -200.0f64..200.0,
        ) {
            let x = tone(f1, Complex64::new(1.0, 0.2), 1.0, 500.0);
            let y = tone(f2, Complex64::new(-0.3, 0.7), 1.0, 500.0);
            let s = spec(40.0, 0.8);
            let combo = ComplexWaveform {
                samples: x.samples.iter().zip(&y.samples).map(|(u, v)| u * a + v * b).collect(),
                ..x.clone()
            };
            let rx = demodulate(&x, &s).unwrap().integrated_point;
            let ry = demodulate(&y, &s).unwrap().integrated_point;
            let rc = demodulate(&combo, &s).unwrap().integrated_point;
            prop_assert!((rc - (rx * a + ry * b)).norm() < 1e-9);
            let rot = Complex64::cis(theta);
            let rr = demodulate(&x.scaled(rot), &s).unwrap().integrated_point;
            prop_assert!((rr - rx * rot).norm() < 1e-9);
        }
    }
}
