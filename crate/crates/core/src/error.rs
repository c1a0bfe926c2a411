use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::BackendError;
use crate::artifact::ValidationReport;
use crate::sandbox::SandboxError;
use crate::stage::Stage;
use crate::store::StoreError;

/// Coarse error classes exposed to API clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    NotFound,
    BadStage,
    ValidationFailed,
    BackendFailure,
    GuardrailExhausted,
    SandboxError,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::NotFound => "not_found",
            ErrorClass::BadStage => "bad_stage",
            ErrorClass::ValidationFailed => "validation_failed",
            ErrorClass::BackendFailure => "backend_failure",
            ErrorClass::GuardrailExhausted => "guardrail_exhausted",
            ErrorClass::SandboxError => "sandbox_error",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{operation} requires stage {expected}, session is at {actual}")]
    BadStage {
        operation: &'static str,
        expected: String,
        actual: Stage,
    },
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    OutOfRange(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("validation failed: {0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{step}: agent output still unusable after {attempts} attempts: {last_problem}")]
    GuardrailExhausted {
        step: String,
        attempts: u32,
        last_problem: String,
    },
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("repair budget exhausted: artifact already repaired {repair_count} time(s), limit {max_repairs}")]
    RepairBudgetExhausted { repair_count: u32, max_repairs: u32 },
    #[error(
        "generated code still fails after {executions} execution(s), exit status {exit_status}"
    )]
    ExecutionFailed { exit_status: i32, executions: u32 },
    #[error("stored data is corrupt: {0}")]
    Corruption(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotFound(_) => ErrorClass::NotFound,
            Error::BadStage { .. } | Error::Precondition(_) => ErrorClass::BadStage,
            Error::OutOfRange(_)
            | Error::InvalidInput(_)
            | Error::Validation(_)
            | Error::Corruption(_) => ErrorClass::ValidationFailed,
            Error::Backend(_) | Error::Storage(_) => ErrorClass::BackendFailure,
            Error::GuardrailExhausted { .. } => ErrorClass::GuardrailExhausted,
            Error::Sandbox(_)
            | Error::RepairBudgetExhausted { .. }
            | Error::ExecutionFailed { .. } => ErrorClass::SandboxError,
        }
    }
}

impl From<StoreError> for Error {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Invalid(report) => Error::Validation(report),
            StoreError::NotFound(what) => Error::NotFound(what),
            StoreError::BadRef(what) => Error::NotFound(format!("no artifact or session `{what}`")),
            e @ (StoreError::Corrupt { .. } | StoreError::Json(_)) => {
                Error::Corruption(e.to_string())
            }
            StoreError::Io(e) => Error::Storage(e.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
