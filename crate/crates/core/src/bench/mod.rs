//! Experiment driver behind the `noisekws` command line: configuration
//! profiles, on-demand artifacts in a work directory, figure tables and run
//! manifests.

mod commands;
mod config;
mod manifest;
mod table;

pub use commands::{
    cmd_adapt, cmd_evaluate, cmd_experiment, cmd_prepare, cmd_pretrain, cmd_synth, parse_conditions, EvalTarget,
    Figure, ModelKind, Workspace,
};
pub use config::{ExperimentConfig, Profile};
pub use manifest::{artifact_id, RunManifest};
pub use table::{FigureRow, FigureTable};

use thiserror::Error;

use crate::adapt::AdaptError;
use crate::dataset::DatasetError;
use crate::frontend::FrontendError;
use crate::nn::NnError;
use crate::train::TrainError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BenchError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.as_ref().display().to_string();
        move |source| BenchError::Io { path, source }
    }
}
