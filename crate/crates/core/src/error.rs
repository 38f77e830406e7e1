use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no tips: boundary pseudo-crack {0} has no tip positions")]
    NoTips(usize),
    #[error("cannot place cracks: gave up after {attempts} rejection attempts (placed {placed} of {requested})")]
    CannotPlaceCracks {
        attempts: usize,
        placed: usize,
        requested: usize,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("rank deficient system in polynomial fit")]
    RankDeficient,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("divergence: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("degenerate crack: zero-length edge at node {0}")]
    DegenerateCrack(usize),
    #[error("pair/scenario mismatch: {0}")]
    PairMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported model format '{0}'")]
    Format(String),
    #[error("scenario seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
