use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),

    #[error("interval division by zero")]
    IntervalDivisionByZero,

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("point {point} outside box {lo}..{hi} in dimension {index}")]
    PointOutsideBox { index: usize, point: f64, lo: f64, hi: f64 },

    #[error("envelope root-find failure on [{lo}, {hi}]")]
    RootFind { lo: f64, hi: f64 },

    #[error("covariance matrix not PD")]
    NotPositiveDefinite,

    #[error("model schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("LP numerical breakdown at node {node}: {message}")]
    LpBreakdown { node: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
