use std::path::Path;

use farecombo::embed::EmbedError;
use farecombo::models::ModelError;
use farecombo::pipeline::PipelineError;
use farecombo::zoo::ZooError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("output directory {0} is in use by another run (remove {0}/.farecombo.lock if stale)")]
    Locked(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("corrupt data in {path}: {reason}")]
    CorruptData { path: String, reason: String },
    #[error("not enough history: need {needed} days, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("the validation gate rejected every day; nothing was released")]
    NothingReleased,
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Locked(_) | CliError::Failed(_) => 1,
            CliError::InvalidConfig(_) => 2,
            CliError::MissingData(_) | CliError::CorruptData { .. } | CliError::InsufficientHistory { .. } => 3,
            CliError::NothingReleased => 4,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InsufficientHistory { needed, available } => {
                CliError::InsufficientHistory { needed, available }
            }
            PipelineError::InvalidFractions(m) | PipelineError::InvalidConfig(m) => CliError::InvalidConfig(m),
            PipelineError::Zoo(e) => e.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EmptyCorpus => CliError::MissingData(
                "no user has enough searches to form a trace; simulate more days or queries per day".into(),
            ),
            EmbedError::InvalidConfig(m) => CliError::InvalidConfig(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<ZooError> for CliError {
    fn from(e: ZooError) -> Self {
        match e {
            ZooError::Embed(e) => e.into(),
            ZooError::NoHistory => CliError::InsufficientHistory { needed: 1, available: 0 },
            ZooError::Model(ModelError::InvalidConfig(m)) => CliError::InvalidConfig(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}
