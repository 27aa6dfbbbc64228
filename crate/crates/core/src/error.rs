use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("tone at {offset_mhz} MHz aliases at sample rate {sample_rate_mhz} MHz")]
    Aliasing { offset_mhz: f64, sample_rate_mhz: f64 },

    #[error("channel {channel}: detuning {detuning_mhz} MHz is inside the straddling regime")]
    StraddlingRegime { channel: String, detuning_mhz: f64 },

    #[error("integration step too coarse for channel {channel}: {samples_per_timescale:.2} samples per cavity timescale (need >= 10)")]
    Resolution { channel: String, samples_per_timescale: f64 },

    #[error("demodulation window [{start}, {end}] μs lies outside the waveform [{wf_start}, {wf_end}] μs")]
    WindowOutOfRange { start: f64, end: f64, wf_start: f64, wf_end: f64 },

    #[error("degenerate projection references")]
    DegenerateReferences,

    #[error("mixture component collapsed (σ = {sigma:e}, data range {range:e})")]
    CollapsedComponent { sigma: f64, range: f64 },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing ensemble: {0}")]
    MissingEnsemble(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::FitFailure(_) | Error::CollapsedComponent { .. } | Error::InsufficientData(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
