use clap::{Parser, Subcommand};
use muxsim::runner::experiments::calibrate_efficiency;
use muxsim::runner::{self, ExperimentConfig, ExperimentKind};
use muxsim::Result;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "muxsim", version, about = "Frequency-multiplexed dispersive readout simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// overrides the experiment named in the config
        #[arg(long)]
        experiment: Option<String>,
        /// shots per prepared state
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// analytic integrated-point generator instead of the waveform chain
        #[arg(long)]
        fast_path: bool,
        /// also write wall-clock time to timing.json
        #[arg(long)]
        timing: bool,
    },
    /// Check a config and its device without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Find the amplifier efficiency that puts one channel at a target fidelity.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "Q2")]
        channel: String,
        #[arg(long, default_value_t = 0.9857)]
        target: f64,
        #[arg(long, default_value_t = 0.05)]
        low: f64,
        #[arg(long, default_value_t = 1.0)]
        high: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long)]
        shots: Option<usize>,
    },
}

fn load(config: &PathBuf) -> Result<(ExperimentConfig, muxsim::DeviceConfig)> {
    let cfg = ExperimentConfig::from_file(config)?;
    let dev = cfg.load_device()?;
    Ok((cfg, dev))
}

fn execute(cli: Cli) -> Result<()> {
    let threads = runner::thread_count()?;
    match cli.command {
        Command::Run {
            config,
            experiment,
            shots,
            seed,
            out,
            fast_path,
            timing,
        } => {
            let (mut cfg, dev) = load(&config)?;
            if let Some(e) = experiment {
                cfg.experiment = e.parse::<ExperimentKind>()?;
            }
            if let Some(n) = shots {
                cfg.shots = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.fast_path |= fast_path;
            cfg.validate(&dev)?;
            let start = Instant::now();
            let report = runner::with_pool(threads, || runner::run(&cfg, &dev))??;
            let elapsed = timing.then(|| start.elapsed());
            runner::write_report(&cfg.output_dir, &cfg, &dev, &report, elapsed)?;
            print!("{}", report.summary_text());
            Ok(())
        }
        Command::Validate { config } => {
            let (cfg, dev) = load(&config)?;
            let report = cfg.device_report(&dev);
            for v in &report.violations {
                eprintln!("violation: {v}");
            }
            cfg.validate(&dev)?;
            println!("ok: {} channels, experiment {}", dev.len(), cfg.experiment);
            Ok(())
        }
        Command::Calibrate {
            config,
            channel,
            target,
            low,
            high,
            tolerance,
            shots,
        } => {
            let (mut cfg, dev) = load(&config)?;
            if let Some(n) = shots {
                cfg.shots = n;
            }
            let cal = runner::with_pool(threads, || calibrate_efficiency(&cfg, &dev, &channel, target, (low, high), tolerance))??;
            for (eta, f) in &cal.evaluations {
                println!("efficiency={eta} fidelity={f}");
            }
            println!("calibrated_efficiency={}", cal.efficiency);
            println!("calibrated_fidelity={}", cal.fidelity);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
