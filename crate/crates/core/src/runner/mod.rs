//! Experiment orchestration: configuration, per-shot simulation and outputs.

pub mod config;
pub mod experiments;
pub mod output;
pub mod rng;
pub mod shots;

pub use config::{ExperimentConfig, ExperimentKind};
pub use output::{write_report, Report};

use crate::params::DeviceConfig;
use crate::{Error, Result};

/// Worker count from `MUXSIM_THREADS`, or all cores.
pub fn thread_count() -> Result<usize> {
    match std::env::var("MUXSIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("MUXSIM_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs the configured experiment and returns its report.
pub fn run(cfg: &ExperimentConfig, dev: &DeviceConfig) -> Result<Report> {
    use experiments::*;
    cfg.validate(dev)?;
    Ok(match cfg.experiment {
        ExperimentKind::Histogram => run_histogram(cfg, dev)?.report(),
        ExperimentKind::Spectroscopy => run_spectroscopy(cfg, dev)?.report(),
        ExperimentKind::Rabi => run_rabi(cfg, dev)?.report(),
        ExperimentKind::Ramsey => run_ramsey(cfg, dev)?.report(),
        ExperimentKind::Jumps => run_jumps(cfg, dev)?.report(),
        ExperimentKind::Crosstalk => run_crosstalk(cfg, dev)?.report(),
        ExperimentKind::ChiCalibration => run_chi_calibration(cfg, dev)?.report(),
    })
}
