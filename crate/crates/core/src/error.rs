use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("parameter a = {a} outside the admissible domain for sigma1 = {sigma1} ({context})")]
    Domain {
        a: f64,
        sigma1: f64,
        context: &'static str,
    },

    #[error("operation requires the {expected:?} regime, got b = {b}")]
    WrongRegime {
        expected: crate::model::Regime,
        b: f64,
    },

    #[error("path has {count} grid points below the 1/Y floor")]
    FloorHit { count: usize },

    #[error("path carries no Brownian increments")]
    MissingIncrements,

    #[error("increment length mismatch: dW has {dw}, dB has {db}")]
    LengthMismatch { dw: usize, db: usize },

    #[error("degenerate Gram matrix (det = {det:e})")]
    DegenerateGram { det: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{flagged} of {total} replicates flagged; aborting")]
    TooManyFlagged { flagged: usize, total: usize },

    #[error("{0}")]
    Invalid(String),
}
