use thiserror::Error;

use crate::sysdsl::{EvalError, ParseDiagnostic};

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseDiagnostic),
    #[error("evaluation failed at x = {point:?}: {source}")]
    Eval {
        point: Vec<f64>,
        #[source]
        source: EvalError,
    },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("integration failed: {0}")]
    Integration(#[from] IntegrationError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
    #[error("no sign change in bracket [{lo}, {hi}]: {detail}")]
    NoSignChange { lo: f64, hi: f64, detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Failure of the adaptive integrator behind the exact models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {h:e}); last state {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("exceeded {max_steps} internal steps at t = {t}; last state {state:?}")]
    TooManySteps { t: f64, max_steps: usize, state: Vec<f64> },
    #[error("vector field undefined at {state:?}: {source}")]
    Eval {
        state: Vec<f64>,
        #[source]
        source: EvalError,
    },
}

impl Error {
    pub fn eval(point: &[f64], source: EvalError) -> Self {
        Error::Eval { point: point.to_vec(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
