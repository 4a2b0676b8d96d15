use thiserror::Error;

/// Errors raised while constructing or analysing maps, kernels and observables.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("branch of cell {home}: {reason}")]
    Branch { home: i64, reason: String },

    #[error("image [{k1}, {k2}] of the branch of cell {home} must contain it and span at least 2 cells")]
    ImageRange { home: i64, k1: i64, k2: i64 },

    #[error("inverse branches do not preserve Lebesgue measure: max |sum |phi'| - 1| = {residual:e}")]
    NotMeasurePreserving { residual: f64 },

    #[error("perturbation sum sign(phi'_0j) * delta_j = {sum} is not zero")]
    PerturbationSum { sum: String },

    #[error("perturbation index set mismatch: expected branches {expected:?}, got {got:?}")]
    PerturbationSet { expected: Vec<i64>, got: Vec<i64> },

    #[error("perturbation value {0} is not a dyadic rational")]
    NotDyadic(String),

    #[error("perturbed branch of cell {home} is not strictly monotone")]
    MonotonicityLost { home: i64 },

    #[error("kernel row {row}: {reason}")]
    KernelRow { row: i64, reason: String },

    #[error("invalid kernel: {0}")]
    Kernel(String),

    #[error("state vector: {0}")]
    State(String),

    #[error("map variant mismatch: {0}")]
    Variant(String),

    #[error("expansion constant lambda = {0} must exceed 1")]
    NotExpanding(f64),

    #[error("word {word:?} is not admissible at position {position}")]
    Inadmissible { word: Vec<i64>, position: usize },

    #[error("empty window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("infinite-volume average unavailable: {0}")]
    AveUnavailable(String),

    #[error("job needs {needed} map evaluations, budget is {budget}")]
    Budget { needed: u128, budget: u128 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
