use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node index {index} out of range for a network with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },

    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),

    #[error("network must have at least one node")]
    EmptyNodeSet,

    #[error("term `{term}` is not defined for {kind} networks")]
    IncompatibleTerm { term: String, kind: &'static str },

    #[error("covariate `{0}` not found")]
    MissingCovariate(String),

    #[error("invalid covariate `{name}`: {reason}")]
    InvalidCovariate { name: String, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered in {what} at iteration {iteration}")]
    NonFinite {
        what: &'static str,
        iteration: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("exhaustive enumeration over {dyads} dyads exceeds the limit of {limit}")]
    TooManyDyads { dyads: usize, limit: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
