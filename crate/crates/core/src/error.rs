use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("base temperature never weighted; ladder or Ẑ badly initialized")]
    BaseNeverWeighted,
    #[error("c_hat vanishes in bins {0:?}")]
    EmptyBins(Vec<usize>),
    #[error("all bins empty")]
    AllBinsEmpty,
    #[error("no samples at the base temperature (n_1 = 0); cannot anchor")]
    NoAnchor,
    #[error("transition matrix is reducible; unreachable states {0:?}")]
    Reducible(Vec<usize>),
    #[error("enumeration infeasible: smaller side has {0} units (limit 25)")]
    EnumerationInfeasible(usize),
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
