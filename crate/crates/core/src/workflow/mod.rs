//! The session state machine.
//!
//! Agency is layered. The writer may edit at any time. Comments arrive only
//! on request. The assistant wakes only when a comment is accepted, then
//! suggests techniques; highlights exist only for a selected suggestion and
//! revision proposals only for a highlight. Nothing but a writer edit or an
//! explicit adoption ever changes the story text.

mod engine;
mod event;
mod session;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{
    EditOutcome, PendingAccept, PendingCall, PendingComment, PendingHighlights, PendingRevision, Workbench,
};
pub use event::{Actor, AnchorOwner, CapturedReply, Event, EventKind, Operation};
pub use session::{replay, Highlight, HighlightState, ProposalState, ReplayError, RevisionProposal, Session};

use crate::document::DocumentError;
use crate::gateway::GatewayError;

/// Client-facing error category. Every [`WorkflowError`] maps to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    VersionMismatch,
    NotFound,
    IllegalTransition,
    GatewayFailure,
    InvalidSelection,
    StaleProposal,
    Integrity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowError {
    #[error("edit is based on version {edit_base} but the story is at version {current}")]
    VersionMismatch { edit_base: u64, current: u64 },
    #[error("invalid range: {0}")]
    InvalidRange(DocumentError),
    #[error("the selection is empty")]
    EmptySelection,
    #[error("no {kind} with id {id}")]
    NotFound { kind: &'static str, id: u64 },
    #[error("{0}")]
    IllegalTransition(String),
    #[error("highlight {0} no longer matches the story")]
    OrphanedHighlight(u64),
    #[error("proposal {0} is stale: its passage changed after it was offered")]
    StaleProposal(u64),
    #[error("{operation:?} failed: {source}")]
    Gateway { operation: Operation, source: GatewayError },
    #[error("none of the {dropped} suggested passages occur in the story")]
    NoApplicablePassage { dropped: usize },
    #[error("reply discarded: the story moved from version {base_version} to {current_version} while waiting")]
    StaleReply { base_version: u64, current_version: u64 },
    #[error("integrity: {0}")]
    Integrity(ReplayError),
}

impl WorkflowError {
    pub fn code(&self) -> ErrorCode {
        match self {
            WorkflowError::VersionMismatch { .. } | WorkflowError::StaleReply { .. } => ErrorCode::VersionMismatch,
            WorkflowError::InvalidRange(_) | WorkflowError::EmptySelection => ErrorCode::InvalidSelection,
            WorkflowError::NotFound { .. } => ErrorCode::NotFound,
            WorkflowError::IllegalTransition(_) | WorkflowError::OrphanedHighlight(_) => ErrorCode::IllegalTransition,
            WorkflowError::StaleProposal(_) => ErrorCode::StaleProposal,
            WorkflowError::Gateway { .. } | WorkflowError::NoApplicablePassage { .. } => ErrorCode::GatewayFailure,
            WorkflowError::Integrity(_) => ErrorCode::Integrity,
        }
    }
}

impl From<DocumentError> for WorkflowError {
    fn from(e: DocumentError) -> Self {
        match e {
            DocumentError::VersionMismatch { edit_base, current } => {
                WorkflowError::VersionMismatch { edit_base, current }
            }
            other => WorkflowError::InvalidRange(other),
        }
    }
}
