use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("no feasible threshold split: {0}")]
    Infeasible(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ingestion failed: {0}")]
    Ingest(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Estimation(_) => "estimation",
            Error::RankDeficient(_) => "rank_deficient",
            Error::Infeasible(_) => "infeasible",
            Error::InsufficientHistory(_) => "insufficient_history",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Ingest(_) => "ingest",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::ModelFile(_) => "model_file",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Adds the offending path to an I/O error.
pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
