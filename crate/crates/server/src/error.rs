use epiops::alloc::AllocError;
use epiops::cohort::CohortError;
use epiops::fit::FitError;
use epiops::policy::PolicyError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("{message}")]
    BadRequest { message: String, field: Option<String> },
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub status: u16,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ServiceError {
    pub fn bad(message: impl Into<String>) -> Self {
        ServiceError::BadRequest {
            message: message.into(),
            field: None,
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::BadRequest { .. } => 400,
            ServiceError::NotFound(_) => 404,
            ServiceError::Unprocessable(_) => 422,
            ServiceError::Unavailable(_) => 503,
            ServiceError::Internal(_) => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            status: self.status(),
            message: self.to_string(),
            field: match self {
                ServiceError::BadRequest { field, .. } => field.clone(),
                _ => None,
            },
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        ServiceError::Internal(format!("{context}: {e}"))
    }
}

/// Parses a JSON request body, naming the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ServiceError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ServiceError::BadRequest {
            message: format!("{path}: {}", e.inner()),
            field: (path != ".").then_some(path),
        }
    })
}

impl From<FitError> for ServiceError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::InclusionRule { .. } => ServiceError::Unprocessable(e.to_string()),
            FitError::InvalidSeries { .. } | FitError::Csv { .. } | FitError::InvalidConfig(_) => {
                ServiceError::bad(e.to_string())
            }
            _ => ServiceError::Internal(e.to_string()),
        }
    }
}

impl From<PolicyError> for ServiceError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::NotConverged(_) | PolicyError::Uncovered { .. } | PolicyError::Empty => {
                ServiceError::Unprocessable(e.to_string())
            }
            _ => ServiceError::bad(e.to_string()),
        }
    }
}

impl From<AllocError> for ServiceError {
    fn from(e: AllocError) -> Self {
        match e {
            AllocError::InvalidProblem(_) | AllocError::Demand(_) => ServiceError::bad(e.to_string()),
            AllocError::Solver(_) | AllocError::Audit(_) => ServiceError::Internal(e.to_string()),
        }
    }
}

impl From<CohortError> for ServiceError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::UnknownAttribute(_) => ServiceError::NotFound(e.to_string()),
            _ => ServiceError::bad(e.to_string()),
        }
    }
}
