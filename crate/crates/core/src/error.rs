use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Domain errors shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("unknown symbol token {0:?}")]
    UnknownSymbol(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no context of the model matches a history of length {history_len}")]
    NoMatchingContext { history_len: usize },

    #[error("suffix {0:?} has zero stationary probability")]
    ZeroProbabilitySuffix(String),

    #[error("stationary law is not unique: {0}")]
    NotErgodic(String),

    #[error("sample of length {n} is too short for depth h_star = {h_star}")]
    SampleTooShort { n: usize, h_star: usize },

    #[error("node {0:?} is not in the empirical tree")]
    UnknownNode(String),

    #[error("confidence level {0} is outside (0, 1)")]
    BadConfidence(f64),

    #[error("pruning constant c = {0} must exceed 1")]
    BadConstant(f64),

    #[error("tuning set is empty")]
    EmptyTuningSet,

    #[error("penalty table does not cover node {0:?}")]
    MissingPenalty(String),

    #[error("column {0} has zero empirical variance")]
    DegenerateVariance(usize),

    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("inconsistent stationary probabilities: {0}")]
    InconsistentPi(String),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
