//! The seven experiments, each composing the physics and analysis layers.

use super::config::ExperimentConfig;
use super::output::{csv, Report};
use super::rng::{stream_rng, Stage};
use super::shots::{sample_history, Chain, Noise, References, ShotHistory, ShotPoints, ShotScratch, Windows};
use crate::analysis::chi::{extract_chi, ChiEstimate};
use crate::analysis::fidelity::{assign, fidelity_report, ChannelFidelity, ShotOutcome};
use crate::analysis::jumps::{detect_jumps, JumpReport, JumpStatistics, ProjectedTrace};
use crate::analysis::mixture::fit_double_gaussian;
use crate::analysis::projection::{project, projection_axis};
use crate::analysis::ramsey::{fit_ramsey, RamseyFit};
use crate::analysis::stats::{histogram, ks_lattice, truncated_exponential_tau, Histogram, KsResult};
use crate::dsp::{demodulate, DemodSpec, Window as DemodWindow};
use crate::feedline::{amplitude_for_photons, AnalyticCavity, CavityModel, CombDrive, Feedline, ReadoutComb, StateSchedule, ToneSpec};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::params::{angular, dispersive_shift, DeviceConfig, QubitState};
use crate::qubit::{
    apply_pulse, crosstalk_effects, evolve_during_measurement, leakage_for_photons, ramsey_population, rabi_population,
    sample_initial_state, CrosstalkEffect, PulseSequence, TrajectoryRecord,
};
use crate::{Error, Result};
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rand::Rng;
use rayon::prelude::*;

// ---------------------------------------------------------------- histogram

/// Raw shots of the two prepared-state ensembles; shot `2i` is g-prepared, `2i + 1` e-prepared.
pub struct EnsembleRun {
    pub refs: References,
    pub shots: Vec<(ShotHistory, ShotPoints)>,
    pub integration_length: f64,
}

fn prepared_of(k: usize) -> QubitState {
    if k.is_multiple_of(2) {
        QubitState::G
    } else {
        QubitState::E
    }
}

/// Simulates `shots` shots per prepared state through the configured chain.
pub fn simulate_ensembles(chain: &Chain, shots: usize, integration_length: f64) -> Result<EnsembleRun> {
    let n = chain.dev.len();
    let pulses = [vec![PulseSequence::None; n], vec![PulseSequence::Pi; n]];
    let windows = Windows::new(chain, integration_length)?;
    let prepared = windows.prepare()?;
    let refs = prepared.references(n)?;
    let shots = (0..2 * shots)
        .into_par_iter()
        .map_init(ShotScratch::default, |scratch, k| {
            let history = sample_history(chain, k as u64, &pulses[k % 2], integration_length);
            let points = prepared.measure(&history, Noise::Shot { seed: chain.seed, shot: k as u64 }, scratch)?;
            Ok((history, points))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleRun {
        refs,
        shots,
        integration_length,
    })
}

#[derive(Clone, Debug)]
pub struct ChannelHistogram {
    pub label: String,
    pub device_channel: usize,
    pub ref_g: Complex64,
    pub ref_e: Complex64,
    /// absent when heralding is off
    pub herald_threshold: Option<f64>,
    pub fidelity: ChannelFidelity,
    pub histogram: Histogram,
}

#[derive(Clone, Debug)]
pub struct HistogramResult {
    pub integration_length: f64,
    pub shots: usize,
    pub channels: Vec<ChannelHistogram>,
}

impl HistogramResult {
    pub fn channel(&self, label: &str) -> Option<&ChannelHistogram> {
        self.channels.iter().find(|c| c.label == label)
    }

    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.kv("experiment", "histogram");
        r.kv("shots_per_state", self.shots);
        r.kv("integration_length_us", self.integration_length);
        for c in &self.channels {
            let f = &c.fidelity;
            let l = &c.label;
            r.kv(format!("{l}.fidelity"), f.fidelity);
            r.kv(format!("{l}.fidelity_alt"), f.fidelity_alt);
            r.kv(format!("{l}.err_g_as_e"), f.err_g_as_e);
            r.kv(format!("{l}.err_e_as_g"), f.err_e_as_g);
            r.kv(format!("{l}.empirical_fidelity"), f.empirical_fidelity);
            r.kv(format!("{l}.empirical_err_g_as_e"), f.empirical_err_g_as_e);
            r.kv(format!("{l}.empirical_err_e_as_g"), f.empirical_err_e_as_g);
            r.kv(format!("{l}.threshold"), f.threshold);
            if let Some(fit) = &f.fit {
                r.kv(format!("{l}.mu0"), fit.mu0);
                r.kv(format!("{l}.mu1"), fit.mu1);
                r.kv(format!("{l}.sigma0"), fit.sigma0);
                r.kv(format!("{l}.sigma1"), fit.sigma1);
            }
            r.kv(format!("{l}.weights_g"), format!("{};{}", f.weights_g[0], f.weights_g[1]));
            r.kv(format!("{l}.weights_e"), format!("{};{}", f.weights_e[0], f.weights_e[1]));
            r.kv(format!("{l}.kept_g"), f.shots_g);
            r.kv(format!("{l}.kept_e"), f.shots_e);
            r.kv(format!("{l}.discard_fraction"), f.discard_fraction());
            if let Some(t) = c.herald_threshold {
                r.kv(format!("{l}.herald_threshold"), t);
            }
            if let Some(b) = &f.budget {
                r.kv(format!("{l}.budget.decay_during_readout"), b.decay_during_readout);
                r.kv(format!("{l}.budget.preparation_error_g"), b.preparation_error_g);
                r.kv(format!("{l}.budget.preparation_error_e"), b.preparation_error_e);
                r.kv(format!("{l}.budget.overlap_g"), b.overlap_g);
                r.kv(format!("{l}.budget.overlap_e"), b.overlap_e);
            }
            let h = &c.histogram;
            r.file(
                format!("histogram_{l}.csv"),
                csv(
                    &["bin_center", "count_g", "count_e"],
                    (0..h.centers.len()).map(|i| [h.centers[i].to_string(), h.counts_g[i].to_string(), h.counts_e[i].to_string()]),
                ),
            );
        }
        r
    }
}

/// Threshold on herald values: mixture fit when it resolves two states, else the reference midpoint.
fn herald_threshold(values: &[f64], ref_g: f64, ref_e: f64) -> f64 {
    match fit_double_gaussian(values) {
        Ok(fit) if !fit.single_component => fit.threshold,
        _ => 0.5 * (ref_g + ref_e),
    }
}

/// Heralding, projection and fidelity analysis of an ensemble run.
pub fn analyze_ensembles(chain: &Chain, run: &EnsembleRun, bins: usize) -> Result<Vec<ChannelHistogram>> {
    let labels = chain.labels();
    (0..chain.channels.len())
        .map(|i| {
            let j = chain.channels[i];
            let (rg, re) = (run.refs.readout.0[i], run.refs.readout.1[i]);
            let axis = projection_axis(rg, re)?;
            let herald = match &run.refs.herald {
                Some((hg, he)) => {
                    let haxis = projection_axis(hg[i], he[i])?;
                    let values: Vec<f64> = run
                        .shots
                        .iter()
                        .map(|(_, p)| project(p.herald.as_ref().expect("herald points")[i], haxis))
                        .collect();
                    let t = herald_threshold(&values, project(hg[i], haxis), project(he[i], haxis));
                    Some((t, values))
                }
                None => None,
            };
            let outcomes: Vec<ShotOutcome> = run
                .shots
                .iter()
                .enumerate()
                .map(|(k, (hist, pts))| {
                    let herald_pass = herald.as_ref().is_none_or(|(t, v)| assign(v[k], *t) == QubitState::G);
                    let point = pts.readout[i];
                    ShotOutcome {
                        channel: j,
                        prepared: prepared_of(k),
                        herald_pass,
                        integrated_point: point,
                        rotated_value: project(point, axis),
                        assigned: None,
                        truth: Some(hist.readout[j].clone()),
                    }
                })
                .collect();
            let fidelity = fidelity_report(&outcomes)?;
            let kept = |p: QubitState| -> Vec<f64> {
                outcomes
                    .iter()
                    .filter(|o| o.herald_pass && o.prepared == p)
                    .map(|o| o.rotated_value)
                    .collect()
            };
            Ok(ChannelHistogram {
                label: labels[i].clone(),
                device_channel: j,
                ref_g: rg,
                ref_e: re,
                herald_threshold: herald.map(|(t, _)| t),
                histogram: histogram(&kept(QubitState::G), &kept(QubitState::E), bins.max(1)),
                fidelity,
            })
        })
        .collect()
}

/// Single-shot fidelity of every read-out channel, read out simultaneously.
pub fn run_histogram(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<HistogramResult> {
    let chain = Chain::from_config(cfg, dev)?;
    let length = cfg.integration_length(dev)?;
    let run = simulate_ensembles(&chain, cfg.shots, length)?;
    Ok(HistogramResult {
        integration_length: length,
        shots: cfg.shots,
        channels: analyze_ensembles(&chain, &run, cfg.histogram.bins)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub efficiency: f64,
    pub fidelity: f64,
    pub evaluations: Vec<(f64, f64)>,
}

/// Bisection on the amplifier efficiency until `label` reaches `target` fidelity.
///
/// Fidelity rises monotonically with η at fixed seed in practice, so a
/// bracketing search over `[lo, hi]` converges; it stops once the bracket is
/// narrower than `tol`.
pub fn calibrate_efficiency(cfg: &ExperimentConfig, dev: &DeviceConfig, label: &str, target: f64, bracket: (f64, f64), tol: f64) -> Result<Calibration> {
    let j = dev
        .channel_index(label)
        .ok_or_else(|| Error::Config(format!("unknown channel '{label}'")))?;
    let mut evaluations = Vec::new();
    let mut eval = |eta: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.amplifier.efficiency = eta;
        let res = run_histogram(&c, dev)?;
        let f = res
            .channels
            .iter()
            .find(|ch| ch.device_channel == j)
            .ok_or_else(|| Error::Config(format!("channel '{label}' is not read out")))?
            .fidelity
            .fidelity;
        evaluations.push((eta, f));
        Ok(f)
    };
    let (mut lo, mut hi) = bracket;
    let (f_lo, f_hi) = (eval(lo)?, eval(hi)?);
    if !(f_lo <= target && target <= f_hi) {
        return Err(Error::FitFailure(format!(
            "target fidelity {target} outside [{f_lo}, {f_hi}] over efficiency bracket [{lo}, {hi}]"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let efficiency = 0.5 * (lo + hi);
    let fidelity = eval(efficiency)?;
    Ok(Calibration {
        efficiency,
        fidelity,
        evaluations,
    })
}

// ------------------------------------------------------------- spectroscopy

#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceFit {
    /// GHz
    pub resonance: f64,
    /// MHz
    pub kappa_ext: f64,
    /// MHz
    pub kappa_int: f64,
}

impl ResonanceFit {
    pub fn linewidth(&self) -> f64 {
        self.kappa_ext + self.kappa_int
    }
}

#[derive(Clone, Debug)]
pub struct SpectroscopyChannel {
    pub label: String,
    /// GHz
    pub freqs: Vec<f64>,
    /// measured reflection for g and e; the raw reflected flux when the probe is off
    pub response: [Vec<Complex64>; 2],
    pub fits: Option<[ResonanceFit; 2]>,
}

impl SpectroscopyChannel {
    /// Pulled-resonance separation ν_g − ν_e in MHz.
    pub fn separation(&self) -> Option<f64> {
        self.fits.as_ref().map(|f| (f[0].resonance - f[1].resonance) * 1e3)
    }
}

#[derive(Clone, Debug)]
pub struct SpectroscopyResult {
    pub channels: Vec<SpectroscopyChannel>,
}

impl SpectroscopyResult {
    pub fn channel(&self, label: &str) -> Option<&SpectroscopyChannel> {
        self.channels.iter().find(|c| c.label == label)
    }

    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.kv("experiment", "spectroscopy");
        for c in &self.channels {
            let l = &c.label;
            if let Some(f) = &c.fits {
                for (s, fit) in ["g", "e"].iter().zip(f) {
                    r.kv(format!("{l}.{s}.resonance_ghz"), fit.resonance);
                    r.kv(format!("{l}.{s}.kappa_mhz"), fit.linewidth());
                    r.kv(format!("{l}.{s}.kappa_ext_mhz"), fit.kappa_ext);
                    r.kv(format!("{l}.{s}.kappa_int_mhz"), fit.kappa_int);
                }
                r.kv(format!("{l}.separation_mhz"), c.separation().unwrap_or(f64::NAN));
            }
            let rows = (0..c.freqs.len()).map(|i| {
                let (g, e) = (c.response[0][i], c.response[1][i]);
                [c.freqs[i], g.norm(), g.arg(), e.norm(), e.arg()].map(|v| v.to_string())
            });
            r.file(format!("spectroscopy_{l}.csv"), csv(&["freq_ghz", "amp_g", "phase_g", "amp_e", "phase_e"], rows));
        }
        r
    }
}

/// Γ(f) = 1 − κ_ext/(κ/2 + i·2π(f − f0)), κ angular.
fn reflection_model(f_mhz: f64, f0: f64, kext: f64, kint: f64) -> Complex64 {
    let k = angular(kext + kint);
    Complex64::new(1.0, 0.0) - angular(kext) / Complex64::new(k / 2.0, angular(f_mhz - f0))
}

/// Complex least-squares fit of the one-port reflection model; `f` in MHz.
fn fit_resonance(f: &[f64], gamma: &[Complex64]) -> Result<(f64, f64, f64)> {
    // resonance where Γ is most negative; full width between the Re Γ = 0 crossings
    let imin = (0..f.len())
        .min_by(|&a, &b| gamma[a].re.total_cmp(&gamma[b].re))
        .ok_or_else(|| Error::InsufficientData("empty sweep".into()))?;
    let crossing = |range: Box<dyn Iterator<Item = usize>>| -> Option<f64> {
        let mut prev: Option<usize> = None;
        for i in range {
            if let Some(p) = prev {
                if gamma[p].re.signum() != gamma[i].re.signum() {
                    let t = gamma[p].re / (gamma[p].re - gamma[i].re);
                    return Some(f[p] + t * (f[i] - f[p]));
                }
            }
            prev = Some(i);
        }
        None
    };
    let up = crossing(Box::new(imin..f.len()));
    let down = crossing(Box::new((0..=imin).rev()));
    let span = f[f.len() - 1] - f[0];
    let width = match (down, up) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => span / 6.0,
    };
    let residuals = |q: &[f64]| {
        f.iter()
            .zip(gamma)
            .flat_map(|(&fi, &g)| {
                let d = reflection_model(fi, q[0], q[1], q[2]) - g;
                [d.re, d.im]
            })
            .collect::<Vec<_>>()
    };
    let fit = levenberg_marquardt(residuals, &[f[imin], 0.98 * width, 0.02 * width], LmOptions::default())?;
    Ok((fit.params[0], fit.params[1], fit.params[2]))
}

/// Swept single-tone reflection of each read-out cavity with its qubit held in g and in e.
///
/// The reflection is taken at the feedline output: the amplifier is a linear,
/// separately calibrated stage here and would be divided out again.
pub fn run_spectroscopy(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<SpectroscopyResult> {
    cfg.validate(dev)?;
    let plan = &cfg.spectroscopy;
    let feedline = Feedline::new(dev)?;
    let fs = cfg.simulation_rate;
    let mut channels = Vec::new();
    for j in cfg.readout_channels(dev)? {
        let c = &dev.channels[j];
        let chi = dispersive_shift(c)?;
        let kappa = c.kappa_total();
        let half_span = plan.span_kappas * kappa + chi.abs();
        let settle = (plan.settle_kappas / angular(kappa) * fs).ceil() / fs;
        let eps = amplitude_for_photons(c, plan.photons, 0.0);
        let centre = c.cavity_freq * 1e3;
        let freqs_mhz: Vec<f64> = (0..plan.points)
            .map(|i| centre - half_span + 2.0 * half_span * i as f64 / (plan.points - 1) as f64)
            .collect();
        let measure = |state: QubitState, f_mhz: f64| -> Result<Complex64> {
            let offset = f_mhz - dev.carrier_freq * 1e3;
            let comb = ReadoutComb {
                tones: vec![ToneSpec {
                    channel: c.label.clone(),
                    offset_freq: offset,
                    amplitude: eps,
                    phase: 0.0,
                    start: 0.0,
                    duration: settle + plan.measure_length,
                }],
            };
            let drive = CombDrive::from_comb(dev, &comb, settle + plan.measure_length, fs)?;
            let schedules = vec![StateSchedule::constant(state); dev.len()];
            let out = feedline.plan(&drive)?.run(&schedules, None, false)?.output;
            let spec = DemodSpec {
                channel: j,
                offset_freq: offset,
                integration_start: settle,
                integration_length: plan.measure_length,
                trace_bin: None,
                window: DemodWindow::Boxcar,
            };
            let z = demodulate(&out, &spec)?.integrated_point / plan.measure_length;
            Ok(if eps > 0.0 { z / eps } else { z })
        };
        let sweep = |state: QubitState| -> Result<Vec<Complex64>> { freqs_mhz.par_iter().map(|&f| measure(state, f)).collect() };
        let response = [sweep(QubitState::G)?, sweep(QubitState::E)?];
        let fits = if eps > 0.0 {
            let fit = |g: &[Complex64]| -> Result<ResonanceFit> {
                let (f0, kext, kint) = fit_resonance(&freqs_mhz, g)?;
                Ok(ResonanceFit {
                    resonance: f0 * 1e-3,
                    kappa_ext: kext,
                    kappa_int: kint,
                })
            };
            Some([fit(&response[0])?, fit(&response[1])?])
        } else {
            None
        };
        channels.push(SpectroscopyChannel {
            label: c.label.clone(),
            freqs: freqs_mhz.iter().map(|f| f * 1e-3).collect(),
            response,
            fits,
        });
    }
    Ok(SpectroscopyResult { channels })
}

// --------------------------------------------------------------------- rabi

#[derive(Clone, Debug)]
pub struct RabiResult {
    pub labels: Vec<String>,
    pub durations: Vec<f64>,
    /// mean projected signal relative to the ground reference, [channel][point]
    pub signal: Vec<Vec<f64>>,
    /// |ref_e − ref_g| per channel
    pub separation: Vec<f64>,
    /// model excited population per channel and point
    pub expected_population: Vec<Vec<f64>>,
}

impl RabiResult {
    /// Peak-to-peak amplitude of the mean signal.
    pub fn contrast(&self, i: usize) -> f64 {
        let s = &self.signal[i];
        s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.kv("experiment", "rabi");
        for (i, l) in self.labels.iter().enumerate() {
            r.kv(format!("{l}.contrast"), self.contrast(i));
            r.kv(format!("{l}.reference_separation"), self.separation[i]);
        }
        let mut header = vec!["duration_us".to_string()];
        for l in &self.labels {
            header.push(format!("{l}_signal"));
            header.push(format!("{l}_population"));
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..self.durations.len()).map(|k| {
            let mut row = vec![self.durations[k].to_string()];
            for i in 0..self.labels.len() {
                row.push(self.signal[i][k].to_string());
                row.push((self.signal[i][k] / self.separation[i]).to_string());
            }
            row
        });
        r.file("rabi.csv", csv(&header, rows));
        r
    }
}

/// Simultaneous Rabi sweeps on every read-out channel, averaged raw signal per point.
pub fn run_rabi(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<RabiResult> {
    let mut chain = Chain::from_config(cfg, dev)?;
    chain.timing.herald = false;
    let plan = &cfg.rabi;
    if !(plan.step > 0.0 && plan.max_duration >= 0.0 && plan.shots_per_point >= 1) {
        return Err(Error::Config("invalid Rabi plan".into()));
    }
    let length = cfg.integration_length(dev)?;
    let windows = Windows::new(&chain, length)?;
    let prepared = windows.prepare()?;
    let refs = prepared.references(dev.len())?;
    let nch = chain.channels.len();
    let axes = (0..nch)
        .map(|i| projection_axis(refs.readout.0[i], refs.readout.1[i]))
        .collect::<Result<Vec<_>>>()?;
    let base: Vec<f64> = (0..nch).map(|i| project(refs.readout.0[i], axes[i])).collect();
    let steps = (plan.max_duration / plan.step).round() as usize;
    let durations: Vec<f64> = (0..=steps).map(|k| k as f64 * plan.step).collect();
    let spp = plan.shots_per_point;
    let per_shot = (0..durations.len() * spp)
        .into_par_iter()
        .map_init(ShotScratch::default, |scratch, k| {
            let d = durations[k / spp];
            let pulses = vec![PulseSequence::Rabi { rate: plan.rate, duration: d }; dev.len()];
            let history = sample_history(&chain, k as u64, &pulses, length);
            let pts = prepared.measure(&history, Noise::Shot { seed: chain.seed, shot: k as u64 }, scratch)?;
            Ok((0..nch).map(|i| project(pts.readout[i], axes[i]) - base[i]).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let signal = (0..nch)
        .map(|i| {
            (0..durations.len())
                .map(|k| per_shot[k * spp..(k + 1) * spp].iter().map(|v| v[i]).sum::<f64>() / spp as f64)
                .collect()
        })
        .collect();
    Ok(RabiResult {
        labels: chain.labels(),
        separation: (0..nch).map(|i| (refs.readout.1[i] - refs.readout.0[i]).norm()).collect(),
        expected_population: chain
            .channels
            .iter()
            .map(|&j| durations.iter().map(|&d| rabi_population(&chain.dev.channels[j], plan.rate, d)).collect())
            .collect(),
        durations,
        signal,
    })
}

// ------------------------------------------------------------------- ramsey

fn delay_grid(max_delay: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && max_delay > step) {
        return Err(Error::Config("invalid Ramsey delay grid".into()));
    }
    let n = (max_delay / step).round() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

/// Binomially sampled P_e at each delay; the stream depends only on (seed, point, channel).
fn sample_fringe(seed: u64, channel: usize, delays: &[f64], shots: u64, pe: impl Fn(f64) -> f64) -> Vec<f64> {
    delays
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut rng = stream_rng(seed, k as u64, channel, Stage::Ramsey);
            let p = pe(t).clamp(0.0, 1.0);
            Binomial::new(shots, p).expect("probability in [0,1]").sample(&mut rng) as f64 / shots as f64
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RamseyResult {
    pub labels: Vec<String>,
    pub delays: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub fits: Vec<RamseyFit>,
}

impl RamseyResult {
    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.kv("experiment", "ramsey");
        for (l, f) in self.labels.iter().zip(&self.fits) {
            r.kv(format!("{l}.freq_mhz"), f.freq);
            r.kv(format!("{l}.decay_time_us"), f.decay_time);
        }
        let mut header = vec!["delay_us"];
        header.extend(self.labels.iter().map(String::as_str));
        let rows = (0..self.delays.len()).map(|k| {
            std::iter::once(self.delays[k].to_string())
                .chain(self.populations.iter().map(|p| p[k].to_string()))
                .collect::<Vec<_>>()
        });
        r.file("ramsey.csv", csv(&header, rows));
        r
    }
}

/// Ramsey fringes of every read-out channel from sampled excited-state populations.
pub fn run_ramsey(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<RamseyResult> {
    cfg.validate(dev)?;
    let plan = &cfg.ramsey;
    let delays = delay_grid(plan.max_delay, plan.delay_step)?;
    let channels = cfg.readout_channels(dev)?;
    let populations: Vec<Vec<f64>> = channels
        .iter()
        .map(|&j| {
            let c = &dev.channels[j];
            sample_fringe(cfg.seed, j, &delays, plan.shots_per_point, |t| ramsey_population(c, plan.detuning, t, 0.0, 0.0))
        })
        .collect();
    let fits = populations.iter().map(|p| fit_ramsey(&delays, p)).collect::<Result<Vec<_>>>()?;
    Ok(RamseyResult {
        labels: channels.iter().map(|&j| dev.channels[j].label.clone()).collect(),
        delays,
        populations,
        fits,
    })
}

// ---------------------------------------------------------------- crosstalk

#[derive(Clone, Debug)]
pub struct CrosstalkResult {
    pub victim: String,
    pub aggressor: String,
    pub leakage: f64,
    pub effect: CrosstalkEffect,
    pub delays: Vec<f64>,
    pub off: (Vec<f64>, RamseyFit),
    pub on: (Vec<f64>, RamseyFit),
}

impl CrosstalkResult {
    /// Fringe frequency with the aggressor on minus off, MHz.
    pub fn delta_f(&self) -> f64 {
        self.on.1.freq - self.off.1.freq
    }

    /// Decay-time reduction τ_off − τ_on, μs.
    pub fn delta_tau(&self) -> f64 {
        self.off.1.decay_time - self.on.1.decay_time
    }

    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.kv("experiment", "crosstalk");
        r.kv("victim", &self.victim);
        r.kv("aggressor", &self.aggressor);
        r.kv("leakage", self.leakage);
        r.kv("spurious_photons", self.effect.spurious_photons);
        r.kv("stark_shift_mhz", self.effect.stark_shift);
        r.kv("extra_dephasing_rate_per_us", self.effect.extra_dephasing_rate);
        r.kv("off.freq_mhz", self.off.1.freq);
        r.kv("off.decay_time_us", self.off.1.decay_time);
        r.kv("on.freq_mhz", self.on.1.freq);
        r.kv("on.decay_time_us", self.on.1.decay_time);
        r.kv("delta_f_mhz", self.delta_f());
        r.kv("delta_tau_us", self.delta_tau());
        let rows = (0..self.delays.len()).map(|k| [self.delays[k], self.off.0[k], self.on.0[k]].map(|v| v.to_string()));
        r.file("crosstalk.csv", csv(&["delay_us", "pe_off", "pe_on"], rows));
        r
    }
}

/// Victim Ramsey with the aggressor's readout tone off and on.
///
/// Both arms draw from the same random streams, so a vanishing leakage gives
/// identical fringes.
pub fn run_crosstalk(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<CrosstalkResult> {
    cfg.validate(dev)?;
    let plan = &cfg.crosstalk;
    let v = dev.channel_index(&plan.victim).ok_or_else(|| Error::Config(format!("unknown channel '{}'", plan.victim)))?;
    let a = dev
        .channel_index(&plan.aggressor)
        .ok_or_else(|| Error::Config(format!("unknown channel '{}'", plan.aggressor)))?;
    if v == a {
        return Err(Error::Config("crosstalk victim and aggressor must differ".into()));
    }
    let readout = cfg.readout_channels(dev)?;
    let offset = match readout.iter().position(|&j| j == a) {
        Some(i) => cfg.tone_offsets(dev)?[i],
        None => dev.cavity_offset(a),
    };
    let amplitude = ExperimentConfig::amplitude_for(dev, a, offset, cfg.comb.photons)?;
    let mut dev = dev.clone();
    let leakage = match plan.spurious_photons {
        Some(n) => leakage_for_photons(&dev, v, a, amplitude, offset, n)?,
        None => dev.leakage(v, a),
    };
    dev.set_leakage(v, a, leakage);
    let effect = crosstalk_effects(&dev, v, a, amplitude, offset)?;
    let delays = delay_grid(plan.ramsey.max_delay, plan.ramsey.delay_step)?;
    let vc = &dev.channels[v];
    let det = plan.ramsey.detuning;
    let arm = |shift: f64, gamma: f64| -> Result<(Vec<f64>, RamseyFit)> {
        let p = sample_fringe(cfg.seed, v, &delays, plan.ramsey.shots_per_point, |t| ramsey_population(vc, det, t, shift, gamma));
        let fit = fit_ramsey(&delays, &p)?;
        Ok((p, fit))
    };
    Ok(CrosstalkResult {
        victim: plan.victim.clone(),
        aggressor: plan.aggressor.clone(),
        leakage,
        off: arm(0.0, 0.0)?,
        on: arm(effect.stark_shift, effect.extra_dephasing_rate)?,
        effect,
        delays,
    })
}

// ---------------------------------------------------------- chi calibration

#[derive(Clone, Debug)]
pub struct ChiCalibrationResult {
    pub labels: Vec<String>,
    pub estimates: Vec<ChiEstimate>,
    /// configured χ per channel, MHz
    pub configured: Vec<f64>,
}

impl ChiCalibrationResult {
    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.kv("experiment", "chi_calibration");
        let mut rows = Vec::new();
        for ((l, e), chi) in self.labels.iter().zip(&self.estimates).zip(&self.configured) {
            r.kv(format!("{l}.chi_estimate_mhz"), e.chi);
            r.kv(format!("{l}.chi_configured_mhz"), chi);
            r.kv(format!("{l}.relative_error"), e.chi / chi - 1.0);
            for (n, f) in e.photons.iter().zip(&e.frequencies) {
                rows.push([l.clone(), n.to_string(), f.to_string()]);
            }
        }
        r.file("chi_calibration.csv", csv(&["channel", "photons", "fringe_freq_mhz"], rows));
        r
    }
}

pub fn run_chi_calibration(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<ChiCalibrationResult> {
    cfg.validate(dev)?;
    let plan = cfg.chi_calibration.chi_plan();
    let channels = cfg.readout_channels(dev)?;
    let estimates = channels
        .par_iter()
        .map(|&j| extract_chi(dev, j, &cfg.chi_calibration.photons, &plan, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChiCalibrationResult {
        labels: channels.iter().map(|&j| dev.channels[j].label.clone()).collect(),
        configured: channels.iter().map(|&j| dispersive_shift(&dev.channels[j])).collect::<Result<_>>()?,
        estimates,
    })
}

// -------------------------------------------------------------------- jumps

#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub label: String,
    pub t1: f64,
    pub threshold: f64,
    pub statistics: JumpStatistics,
    /// e-to-g dwell times after the settle time, μs
    pub lifetimes: Vec<f64>,
    /// lifetime estimate corrected for the finite window, μs
    pub lifetime: f64,
    pub ks: KsResult,
    /// (trace, truth) pairs kept for export
    pub examples: Vec<(ProjectedTrace, TrajectoryRecord)>,
}

#[derive(Clone, Debug)]
pub struct JumpResult {
    pub settle: f64,
    pub window: f64,
    pub traces: usize,
    pub channels: Vec<JumpChannel>,
}

impl JumpResult {
    pub fn channel(&self, label: &str) -> Option<&JumpChannel> {
        self.channels.iter().find(|c| c.label == label)
    }

    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.kv("experiment", "jumps");
        r.kv("traces", self.traces);
        r.kv("window_us", self.window);
        r.kv("settle_us", self.settle);
        for c in &self.channels {
            let l = &c.label;
            r.kv(format!("{l}.t1_us"), c.t1);
            r.kv(format!("{l}.lifetime_us"), c.lifetime);
            r.kv(format!("{l}.lifetime_samples"), c.lifetimes.len());
            r.kv(format!("{l}.ks_statistic"), c.ks.statistic);
            r.kv(format!("{l}.ks_p_value"), c.ks.p_value);
            r.kv(format!("{l}.threshold"), c.threshold);
            r.kv(format!("{l}.mean_first_decay_us"), c.statistics.mean_dwell_e);
            if let Some(f) = c.statistics.false_jump_rate {
                r.kv(format!("{l}.false_jumps_per_100_bins"), f);
            }
            for (k, (tr, truth)) in c.examples.iter().enumerate() {
                let rows = (0..tr.values.len()).map(|i| {
                    let t = tr.time(i);
                    let s = u8::from(truth.state_at(t + 0.5 * tr.bin).is_excited());
                    [t.to_string(), tr.values[i].to_string(), s.to_string()]
                });
                r.file(format!("trace_{l}_{k}.csv"), csv(&["time_us", "projected", "true_excited"], rows));
            }
            r.file(
                format!("lifetimes_{l}.csv"),
                csv(&["dwell_us"], c.lifetimes.iter().map(|d| [d.to_string()])),
            );
        }
        r
    }
}

/// Detected state at `t` from a jump report.
fn detected_state_at(r: &JumpReport, t: f64) -> QubitState {
    let n = r.jump_times.iter().take_while(|&&j| j <= t).count();
    if n == 0 {
        r.initial_state
    } else {
        r.new_states[n - 1]
    }
}

/// Continuous monitoring of e-prepared qubits with strong tones.
///
/// Bins are integrated with the analytic cavity response and per-bin Gaussian
/// noise of the chain's matched variance. Lifetimes are the first relaxation
/// after the settle time among traces detected in e at that time, which is an
/// exponential sample with mean T1 by memorylessness, truncated by the window.
pub fn run_jumps(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<JumpResult> {
    let plan = &cfg.jumps;
    let mut fast = cfg.clone();
    fast.fast_path = true;
    fast.comb.amplitudes = None;
    fast.comb.photons = plan.photons;
    let chain = Chain::from_config(&fast, dev)?;
    let nbins = (plan.window / plan.trace_bin).floor() as usize;
    if nbins < 3 {
        return Err(Error::Config("jump traces need at least three bins".into()));
    }
    let window = nbins as f64 * plan.trace_bin;
    if plan.settle >= window {
        return Err(Error::Config("jump settle time exceeds the trace window".into()));
    }
    let traces = if plan.traces == 0 { cfg.shots } else { plan.traces };
    let gains = chain.tone_gains();
    let noise_var = chain.amp.noise_variance(1.0) * plan.trace_bin;
    let adc = (plan.trace_bin * chain.dig.sample_rate).round() * (chain.dig.adc_noise_flux / chain.dig.sample_rate).powi(2);
    let mut channels = Vec::new();
    for (i, &j) in chain.channels.iter().enumerate() {
        let c = &chain.dev.channels[j];
        let model = CavityModel::new(c, chain.dev.carrier_freq)?;
        let cav = AnalyticCavity::new(&model, chain.amplitudes[i], chain.phases[i], chain.offsets[i]);
        let g = gains[i];
        let sd = (g * g * noise_var + adc).sqrt();
        let ref_g = cav.steady_output(QubitState::G) * plan.trace_bin * g;
        let ref_e = cav.steady_output(QubitState::E) * plan.trace_bin * g;
        let axis = projection_axis(ref_g, ref_e)?;
        let threshold = 0.5 * (project(ref_g, axis) + project(ref_e, axis));
        let per_trace = (0..traces)
            .into_par_iter()
            .map(|k| {
                let shot = k as u64;
                let s0 = sample_initial_state(c, &mut stream_rng(chain.seed, shot, j, Stage::ThermalInit));
                let s1 = apply_pulse(c, &PulseSequence::Pi, s0, chain.timing.pi_infidelity, &mut stream_rng(chain.seed, shot, j, Stage::Pulse));
                let mut truth = evolve_during_measurement(c, j, s1, window, &mut stream_rng(chain.seed, shot, j, Stage::ReadoutTrajectory));
                truth.pulse_sequence = PulseSequence::Pi;
                let bins = cav.integrate_bins(&truth.schedule(0.0), 0.0, plan.trace_bin, nbins);
                let mut rng = stream_rng(chain.seed, shot, j, Stage::TraceNoise);
                let values = bins
                    .iter()
                    .map(|b| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        project(b * g + Complex64::new(re, im) * sd, axis)
                    })
                    .collect();
                let trace = ProjectedTrace {
                    t0: 0.0,
                    bin: plan.trace_bin,
                    values,
                };
                let report = detect_jumps(&trace, threshold, plan.min_dwell);
                let free = truth.jump_times.is_empty();
                let keep = (k < plan.export_traces).then_some((trace, truth));
                (report, free, keep)
            })
            .collect::<Vec<_>>();
        let lifetimes: Vec<f64> = per_trace
            .iter()
            .filter(|(r, _, _)| detected_state_at(r, plan.settle) == QubitState::E)
            .filter_map(|(r, _, _)| r.jump_times.iter().find(|&&t| t > plan.settle).map(|t| t - plan.settle))
            .collect();
        // A decay is reported at the bin boundary nearest to it, and the
        // conditioning excludes decays before settle + bin/2, so a dwell of k
        // bins means the decay fell less than k bins after that point.
        let horizon = window - plan.settle - 0.5 * plan.trace_bin;
        let mean = lifetimes.iter().sum::<f64>() / lifetimes.len().max(1) as f64 - 0.5 * plan.trace_bin;
        let lifetime = truncated_exponential_tau(mean, horizon);
        let norm = 1.0 - (-horizon / c.t1).exp();
        let ks = ks_lattice(&lifetimes, plan.trace_bin, |t| ((1.0 - (-t / c.t1).exp()) / norm).min(1.0));
        let first_decay_times: Vec<f64> = per_trace
            .iter()
            .filter(|(r, _, _)| r.initial_state == QubitState::E)
            .filter_map(|(r, _, _)| r.first_decay())
            .collect();
        let free: Vec<&JumpReport> = per_trace.iter().filter(|(_, f, _)| *f).map(|(r, _, _)| r).collect();
        let false_jump_rate = (!free.is_empty())
            .then(|| 100.0 * free.iter().map(|r| r.jump_times.len()).sum::<usize>() as f64 / (free.len() * nbins) as f64);
        let statistics = JumpStatistics {
            traces,
            mean_dwell_e: first_decay_times.iter().sum::<f64>() / first_decay_times.len().max(1) as f64,
            first_decay_times,
            false_jump_rate,
        };
        let examples = per_trace.into_iter().filter_map(|(_, _, keep)| keep).collect();
        channels.push(JumpChannel {
            label: c.label.clone(),
            t1: c.t1,
            threshold,
            statistics,
            lifetime,
            ks,
            lifetimes,
            examples,
        });
    }
    Ok(JumpResult {
        settle: plan.settle,
        window,
        traces,
        channels,
    })
}
