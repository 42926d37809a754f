//! Experiment harness for wuxing networks.
//!
//! A run is fully described by an [`ExperimentSpec`] (one TOML file) and
//! produces `metrics.csv`, the effective `config.toml` and a JSON
//! checkpoint in its output directory.

use std::io;
use std::path::PathBuf;

use wuxing_core::WuxingError;

pub mod checkpoint;
pub mod config;
pub mod harness;

pub use checkpoint::Checkpoint;
pub use config::{Case, ExperimentSpec};
pub use harness::{run_eval, run_train, EpochRow, Split};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("epoch {epoch} aborted at sample {sample}: {source}")]
    Divergence {
        epoch: usize,
        sample: usize,
        #[source]
        source: WuxingError,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] WuxingError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    /// Process exit status: 2 for configuration problems, 3 for numeric
    /// divergence, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Divergence { .. } => 3,
            HarnessError::Core(e) if is_numeric(e) => 3,
            _ => 1,
        }
    }
}

fn is_numeric(e: &WuxingError) -> bool {
    matches!(
        e,
        WuxingError::NonFinite(_)
            | WuxingError::Divergence { .. }
            | WuxingError::FixedPointDivergence { .. }
            | WuxingError::SingularParameter
    )
}
