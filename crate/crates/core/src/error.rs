use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QrcError>;

#[derive(Debug, Error)]
pub enum QrcError {
    #[error("size limit exceeded: dimension {requested} is larger than the maximum {max}")]
    SizeLimit { requested: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("site index {index} out of range for a system of {n_sites} sites")]
    SiteIndex { index: usize, n_sites: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("hermiticity violation: {0}")]
    Hermiticity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("integration instability at sample {sample}: {detail}; try more substeps")]
    IntegrationInstability { sample: usize, detail: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("data format error at row {row}: {detail}")]
    DataFormat { row: usize, detail: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl QrcError {
    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            QrcError::SizeLimit { .. } => "size_limit",
            QrcError::Shape(_) => "shape",
            QrcError::SiteIndex { .. } => "site_index",
            QrcError::Argument(_) => "argument",
            QrcError::Hermiticity(_) => "hermiticity",
            QrcError::Numerical(_) => "numerical",
            QrcError::IntegrationInstability { .. } => "integration_instability",
            QrcError::Singular(_) => "singular",
            QrcError::UndefinedCorrelation(_) => "undefined_correlation",
            QrcError::Data(_) => "data",
            QrcError::DataFormat { .. } => "data_format",
            QrcError::Range(_) => "range",
            QrcError::Config(_) => "config",
            QrcError::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QrcError::Io {
            path: path.into(),
            source,
        }
    }
}
