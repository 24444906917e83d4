use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size {0} is outside (0, 1]")]
    SizeOutOfRange(String),

    #[error("cannot parse `{0}` as an exact rational")]
    ParseSize(String),

    #[error("common denominator of the item sizes exceeds 2^62")]
    DenominatorOverflow,

    #[error("invalid LM-pair metadata: {0}")]
    InvalidPairs(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("bin is empty")]
    EmptyBin,

    #[error("instance too large for exact OPT: {n} items exceeds the cap of {cap}")]
    OptTooLarge { n: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "{count} orderings exceed the exact enumeration cap of {cap}; use Monte Carlo sampling instead"
    )]
    EnumerationCap { count: u128, cap: u128 },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("linear system is singular")]
    Singular,

    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
