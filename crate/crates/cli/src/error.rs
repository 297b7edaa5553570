use std::path::PathBuf;

use ishne::checkpoint::CheckpointError;
use ishne::data::DataError;
use ishne::train::TrainError;
use ishne::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("failed to load graph {path}: {}", describe(.source))]
    Graph {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error("{0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Train(#[from] TrainError),
    #[error("{0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
}

/// The cause without a repeated path.
fn describe(e: &DataError) -> String {
    match e {
        DataError::Io { source, .. } => source.to_string(),
        other => other.to_string(),
    }
}

impl CliError {
    /// Process exit status for each error family.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Graph { .. } => 3,
            CliError::Data(DataError::Io { .. }) | CliError::Output { .. } => 4,
            CliError::Data(DataError::Parse { .. }) => 3,
            CliError::Data(DataError::Graph(_)) | CliError::Model(_) => 5,
            CliError::Checkpoint(_) => 6,
            CliError::Train(TrainError::Model(_)) => 5,
            CliError::Train(_) => 7,
            CliError::Data(DataError::InfeasibleSpec(_) | DataError::SplitTooLarge { .. })
            | CliError::Config(_) => 8,
        }
    }
}
