//! Quantum-jump detection on projected readout traces.

use super::projection::{project, projection_axis};
use crate::dsp::DemodResult;
use crate::params::QubitState;
use crate::Result;
use num_complex::Complex64;
use serde::Serialize;

/// Real-valued trace along the state-discrimination axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedTrace {
    /// start of the first bin, μs
    pub t0: f64,
    /// μs
    pub bin: f64,
    pub values: Vec<f64>,
}

impl ProjectedTrace {
    /// Projects bin means onto the axis through bin-mean references.
    pub fn from_demod(r: &DemodResult, ref_g: Complex64, ref_e: Complex64) -> Result<Self> {
        let axis = projection_axis(ref_g, ref_e)?;
        Ok(Self {
            t0: r.trace_t0,
            bin: r.trace_bin,
            values: r.trace.iter().map(|&z| project(z, axis)).collect(),
        })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.bin
    }

    pub fn end(&self) -> f64 {
        self.time(self.values.len())
    }

    /// Same trace with time running backwards, on the same extent.
    pub fn reversed(&self) -> Self {
        Self {
            t0: self.t0,
            bin: self.bin,
            values: self.values.iter().rev().copied().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpReport {
    pub initial_state: QubitState,
    /// boundary times, μs
    pub jump_times: Vec<f64>,
    /// state entered at each jump
    pub new_states: Vec<QubitState>,
}

impl JumpReport {
    pub fn first_decay(&self) -> Option<f64> {
        self.jump_times
            .iter()
            .zip(&self.new_states)
            .find(|(_, &s)| s == QubitState::G)
            .map(|(&t, _)| t)
    }
}

fn side(v: f64, threshold: f64) -> QubitState {
    if v > threshold {
        QubitState::E
    } else {
        QubitState::G
    }
}

/// Hysteretic two-level detection: the state changes once `min_dwell` consecutive
/// bins lie across the threshold, and the jump is placed at the start of that run.
/// The initial state is the majority of the first `min_dwell` bins.
pub fn detect_jumps(trace: &ProjectedTrace, threshold: f64, min_dwell: usize) -> JumpReport {
    let v = &trace.values;
    let dwell = min_dwell.max(1);
    let head = &v[..dwell.min(v.len())];
    let above = head.iter().filter(|&&x| x > threshold).count();
    let mut state = if 2 * above > head.len() { QubitState::E } else { QubitState::G };
    let initial_state = state;
    let mut jump_times = Vec::new();
    let mut new_states = Vec::new();
    let mut run = 0;
    for (i, &x) in v.iter().enumerate() {
        if side(x, threshold) != state {
            run += 1;
            if run == dwell {
                state = state.flipped();
                jump_times.push(trace.time(i + 1 - dwell));
                new_states.push(state);
                run = 0;
            }
        } else {
            run = 0;
        }
    }
    JumpReport {
        initial_state,
        jump_times,
        new_states,
    }
}

/// Aggregate over many traces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpStatistics {
    pub traces: usize,
    /// first relaxation times of traces that start in e, μs from trace start
    pub first_decay_times: Vec<f64>,
    pub mean_dwell_e: f64,
    /// detected jumps per 100 bins on traces whose truth has no jump
    pub false_jump_rate: Option<f64>,
}

pub fn summarize(reports: &[JumpReport], traces: &[ProjectedTrace], truth_jump_free: Option<&[bool]>) -> JumpStatistics {
    let first_decay_times: Vec<f64> = reports
        .iter()
        .zip(traces)
        .filter(|(r, _)| r.initial_state == QubitState::E)
        .filter_map(|(r, t)| r.first_decay().map(|d| d - t.t0))
        .collect();
    let mean_dwell_e = if first_decay_times.is_empty() {
        f64::NAN
    } else {
        first_decay_times.iter().sum::<f64>() / first_decay_times.len() as f64
    };
    let false_jump_rate = truth_jump_free.map(|flags| {
        let (mut jumps, mut bins) = (0usize, 0usize);
        for ((r, t), &free) in reports.iter().zip(traces).zip(flags) {
            if free {
                jumps += r.jump_times.len();
                bins += t.values.len();
            }
        }
        100.0 * jumps as f64 / bins.max(1) as f64
    });
    JumpStatistics {
        traces: reports.len(),
        first_decay_times,
        mean_dwell_e,
        false_jump_rate,
    }
}
