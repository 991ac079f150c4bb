//! Command-line pipeline around `circletrack-core`: simulate meetings, fit
//! tracker parameters with EM, diarize with location-aware AHC, score and
//! sweep.

pub mod commands;
pub mod config;
pub mod formats;
pub mod sweep;

pub use config::{AffinityKind, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] circletrack_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 when nothing could be fitted, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(circletrack_core::Error::NoUsableSequence) => 3,
            _ => 1,
        }
    }
}
