use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("non-stochastic conditional `{field}`: worst column-sum deviation {deviation:e}")]
    NonStochastic { field: String, deviation: f64 },

    #[error("negative entry {value} in `{field}`")]
    NegativeEntry { field: String, value: f64 },

    #[error("goal vector `{field}` at t={t} has no strictly positive entry")]
    ZeroGoal { field: String, t: usize },

    #[error("invalid cardinalities: {0}")]
    InvalidCardinalities(String),

    #[error("malformed document: {0}")]
    Parse(String),

    #[error("enumeration budget exceeded: joint size {size} > {budget}")]
    BudgetExceeded { size: u128, budget: u128 },

    #[error("degenerate slice t={t}: {reason}")]
    DegenerateSlice { t: usize, reason: String },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coordinates failed normalization: {0}")]
    Normalization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
