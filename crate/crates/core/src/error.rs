use thiserror::Error;

/// Errors raised by the exact and numerical procedures of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An interval-valued quantity straddles a comparison boundary. Re-ingest
    /// the coefficients at a higher precision.
    #[error("precision insufficient: {0}")]
    PrecisionInsufficient(String),

    #[error("invalid M: {0}")]
    InvalidM(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Least-squares fit on log values is impossible (some value is zero).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("enumeration too large: {size} exceeds cap {cap} ({what})")]
    EnumerationTooLarge { what: String, size: u128, cap: u128 },

    #[error("truncation tail {tail:.3e} exceeds tolerance {tolerance:.3e}")]
    TailTooLarge { tail: f64, tolerance: f64 },

    #[error("no near-orthogonal selection found: {0}")]
    NoSelectionFound(String),

    #[error("lifting property failed at n' = {n_prime}: {detail}")]
    LiftingPropertyFailed { n_prime: u64, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
