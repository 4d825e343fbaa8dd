use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("feature index {index} appears in more than one group")]
    Overlap { index: usize },
    #[error("feature index {index} is not assigned to any group")]
    Coverage { index: usize },
    #[error("index {index} out of range (limit {limit})")]
    Range { index: usize, limit: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("column {column} has zero norm and cannot be standardized")]
    ZeroColumn { column: usize },
    #[error("solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("no candidate groups remain outside the active set")]
    NoCandidates,
    #[error("group {group} is not in the candidate set A_lambda")]
    PickOutsideCandidates { group: usize },
    #[error("operation requires the {expected} family")]
    Family { expected: &'static str },
    #[error("matrix is singular: {0}")]
    Singular(&'static str),
    #[error("subset enumeration needs {needed} evaluations, over the budget of {budget}")]
    CombinatorialBudget { needed: u128, budget: u128 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid input: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
