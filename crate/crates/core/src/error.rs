use thiserror::Error;

use crate::baselines::CoxModel;

pub type Result<T> = std::result::Result<T, BenkError>;

#[derive(Debug, Error)]
pub enum BenkError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no admissible pairs for the concordance index")]
    NoAdmissiblePairs,

    #[error("need more than {subset} controls to draw subsets of size {subset}, got {controls}")]
    InsufficientControls { controls: usize, subset: usize },

    #[error("every anchor is censored; the loss is empty")]
    AllAnchorsCensored,

    #[error("non-finite loss at epoch {epoch} (batch {batch})")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error(
        "Cox fit did not converge after {iterations} iterations (gradient norm {grad_norm:e})"
    )]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        last: Box<CoxModel>,
    },

    #[error("no uncensored records in the {0} group")]
    NoUncensored(&'static str),

    #[error("every validation record is censored")]
    AllValidationCensored,

    #[error("latent parameter {t} outside the generator domain [{lo}, {hi}]")]
    DomainViolation { t: f64, lo: f64, hi: f64 },

    #[error("forward cache does not match the parameters it is used with")]
    StaleCache,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
