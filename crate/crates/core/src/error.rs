use thiserror::Error;

/// Errors raised by model construction, the solvers and the learners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no unique first-exit solution: {0}")]
    NoUniqueSolution(String),

    #[error("degenerate support at state {state}: normalizer G[z](s) is zero")]
    DegenerateSupport { state: usize },

    #[error("domain error at state {state}: value {value} must be positive")]
    Domain { state: usize, value: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("gain bracket ({lo}, {hi}] does not contain the exponentiated gain")]
    Bracket { lo: f64, hi: f64 },

    #[error("decomposition error: {0}")]
    Decomposition(String),

    #[error("stale base values: solved at gain {found}, expected {expected}")]
    Stale { expected: f64, found: f64 },

    #[error("importance weight undefined: behavior probability is zero for {from} -> {to}")]
    ImportanceWeight { from: usize, to: usize },

    #[error("state {0} has no mapping into its class representative")]
    Mapping(usize),

    #[error("unknown state label `{0}`")]
    UnknownLabel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                return Error::Io(io);
            }
            unreachable!("is_io_error implies an Io kind");
        }
        Error::Parse(e.to_string())
    }
}
