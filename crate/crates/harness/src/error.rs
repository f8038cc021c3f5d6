use std::path::PathBuf;

use mnemo_core::config::ConfigError;
use mnemo_core::EngineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("queries file: {0}")]
    Queries(String),
    #[error("session `{session}` aborted at line {line}: {source}")]
    IngestAborted {
        session: String,
        line: usize,
        source: EngineError,
    },
    #[error("reports do not share a query set: {0}")]
    MismatchedQuerySets(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("report: {0}")]
    Report(String),
}

pub fn read_file(path: &std::path::Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
