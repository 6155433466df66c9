use thiserror::Error;

use crate::model::Diagnostic;
use crate::parser::SourceSpan;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{span}: {message}")]
    Syntax { span: SourceSpan, message: String },

    #[error("invalid program: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),

    #[error("head sum {0} > 1")]
    HeadSum(f64),

    #[error("Herbrand universe is empty but the program has non-ground clauses")]
    EmptyUniverse,

    #[error("non-stratified program: negative cycle through {0}")]
    NonStratified(String),

    #[error("evidence unsatisfiable")]
    EvidenceUnsatisfiable,

    #[error("variable weight {0} outside (0,1]")]
    InvalidWeight(f64),

    #[error("choice variable {0} is not one-hot encoded")]
    NotOneHot(usize),

    #[error("no query choice variables")]
    NoQueryVariables,

    #[error("time limit exceeded")]
    Timeout,

    #[error("node limit of {0} BDD nodes exceeded")]
    NodeLimit(usize),

    #[error("{worlds} worlds exceed the enumeration cap of {cap}")]
    WorldCap { worlds: u128, cap: u128 },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Resource exhaustion rather than bad input.
    pub fn is_resource_limit(&self) -> bool {
        matches!(
            self,
            Error::Timeout | Error::NodeLimit(_) | Error::WorldCap { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
