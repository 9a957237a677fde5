//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("field file{}: {msg}", term.map(|i| format!(" (term {i})")).unwrap_or_default())]
    Schema { msg: String, term: Option<usize> },

    #[error("diagram uses arity {arity} but the field has no degree-{arity} component")]
    MissingComponent { arity: usize },

    #[error("malformed diagram text at byte {at}: {msg}")]
    DiagramParse { msg: String, at: usize },

    #[error(
        "resonance encountered: sub-diagram {subdiagram} satisfies (lambda, n - e_i) = 0 \
         with n = {n:?}, target {target}"
    )]
    ResonanceEncountered { subdiagram: String, n: Vec<u32>, target: usize },

    #[error("solution leaves the convergence region: {0}")]
    BlowUp(String),

    #[error("initial condition outside the estimated convergence radius: {0}")]
    OutsideRadius(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl FlowError {
    pub fn schema(msg: impl Into<String>) -> Self {
        FlowError::Schema { msg: msg.into(), term: None }
    }

    pub fn schema_at(term: usize, msg: impl Into<String>) -> Self {
        FlowError::Schema { msg: msg.into(), term: Some(term) }
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
