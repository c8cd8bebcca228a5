use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use revtogether::store::StoreError;
use revtogether::workflow::{ErrorCode, WorkflowError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Error body returned by every route: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(ErrorCode::NotFound, format!("no {kind} with id {id}")).with_detail(json!({ "kind": kind, "id": id }))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InvalidSelection, message)
    }

    pub fn status(&self) -> StatusCode {
        status_of(self.code)
    }
}

pub fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::VersionMismatch | ErrorCode::IllegalTransition | ErrorCode::StaleProposal => StatusCode::CONFLICT,
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::GatewayFailure => StatusCode::BAD_GATEWAY,
        ErrorCode::InvalidSelection => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::Integrity => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let detail = match &e {
            WorkflowError::VersionMismatch { edit_base, current } => {
                json!({ "base_version": edit_base, "current_version": current })
            }
            WorkflowError::StaleReply { base_version, current_version } => {
                json!({ "base_version": base_version, "current_version": current_version })
            }
            WorkflowError::NotFound { kind, id } => json!({ "kind": kind, "id": id }),
            WorkflowError::OrphanedHighlight(id) => json!({ "highlight_id": id }),
            WorkflowError::StaleProposal(id) => json!({ "proposal_id": id }),
            WorkflowError::Gateway { operation, .. } => json!({ "operation": operation }),
            WorkflowError::NoApplicablePassage { dropped } => json!({ "dropped": dropped }),
            WorkflowError::Integrity(r) => json!({ "seq": r.seq }),
            WorkflowError::InvalidRange(_) | WorkflowError::EmptySelection | WorkflowError::IllegalTransition(_) => {
                Value::Null
            }
        };
        ApiError { code: e.code(), message: e.to_string(), detail }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::NotFound(id) | StoreError::InvalidId(id) => ApiError::not_found("session", id),
            _ => ApiError::new(ErrorCode::Integrity, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}
