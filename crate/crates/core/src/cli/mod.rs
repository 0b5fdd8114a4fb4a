//! Command implementations behind the `drgrade` binary.
//!
//! Every command takes a resolved [`CliConfig`] plus explicit paths, writes
//! its artifacts, and returns an [`Outcome`] whose summary JSON carries the
//! tool version and the effective configuration.

mod commands;
mod config;

pub use commands::{
    cmd_evaluate, cmd_predict, cmd_preprocess, cmd_synth, cmd_train, cmd_verify, PredictInput, TrainPaths,
};
pub use config::{CliConfig, Paths};

use serde_json::Value;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code 2: bad flags, config or missing inputs. Exit code 1: the work
/// itself failed.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

macro_rules! failed_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Failed(e.to_string())
            }
        }
    )*};
}
failed_from!(
    crate::data::DataError,
    crate::nnet::NnetError,
    crate::imgproc::ImgError,
    crate::grading::GradingError,
    std::io::Error,
    serde_json::Error
);

/// Result of a command that ran to completion. `success` is false when the
/// command finished but some of its work failed (for example one bad image).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: Value,
    pub success: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}
