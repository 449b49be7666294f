//! Crate-wide error type.
//!
//! Variants are grouped by the stage that raises them; `is_resource_error`
//! drives the CLI's exit-code split between model problems (exit 2) and
//! resource exhaustion (exit 3).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // Factor construction and algebra.
    #[error("duplicate tuple {0:?} in factor entries")]
    DuplicateTuple(Vec<u32>),
    #[error("value {value} out of range for variable {var} (cardinality {card})")]
    ValueOutOfRange { var: usize, value: u32, card: u32 },
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("keep scope is not a subset of the factor scope")]
    KeepNotSubset,
    #[error("projection variable set does not intersect the factor scope")]
    EmptyIntersection,
    #[error("scope mismatch: expected arity {expected}, got {got}")]
    ScopeMismatch { expected: usize, got: usize },

    // UAI parsing.
    #[error("bad UAI header: {0:?}")]
    BadHeader(String),
    #[error("count mismatch while parsing: {0}")]
    CountMismatch(String),
    #[error("duplicate variable {0} in evidence")]
    DuplicateVariable(usize),

    // Preprocessing.
    #[error("evidence is inconsistent: factor {factor} has no tuple matching the assignment")]
    InconsistentEvidence { factor: usize },
    #[error("model unsatisfiable: variable {0} has empty supported value set")]
    Unsatisfiable(usize),

    // Decomposition.
    #[error("variable {0} is not covered by any hyperedge")]
    UncoverableVariable(usize),
    #[error("linear program is infeasible")]
    LpInfeasible,

    // Storage and kernels.
    #[error("mixed-radix product exceeds 2^63 - 1")]
    IndexOverflow,
    #[error("trie variable order is inconsistent with the bag order")]
    InconsistentOrder,
    #[error("sort-merge input is not strictly sorted by index")]
    UnsortedInput,

    // Inference.
    #[error("model is inconsistent: total mass is zero")]
    InconsistentModel,
    #[error("model too large for exhaustive enumeration ({0} joint assignments)")]
    TooLarge(f64),
    #[error("wall-clock timeout exceeded")]
    Timeout,

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Resource errors map to exit code 3; everything else is a model error.
    pub fn is_resource_error(&self) -> bool {
        matches!(self, Error::IndexOverflow | Error::TooLarge(_) | Error::Timeout)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
