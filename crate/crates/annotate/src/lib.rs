//! Review service for curating explanation scores and preference pairs.
//!
//! Two reviewers score each task; large disagreements go to a third-party
//! arbitrator; a scored or arbitrated task then receives a chosen/rejected
//! pair and becomes exportable as DPO JSONL. All state is derived from an
//! append-only event log.

mod http;
mod store;
mod task;

use axum::http::StatusCode;
use prefaudit_core::datasets::DatasetError;

pub use http::{router, serve, DEFAULT_PORT};
pub use store::{parse_seeds, replay, AuditLogEntry, Member, PairDraft, Queue, Roster, Store, SYSTEM_ACTOR};
pub use task::{Candidate, Event, ReviewTask, StoredPair, TaskSeed, TaskStatus, DEFAULT_DISPUTE_THRESHOLD};

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("{0}")]
    Unauthenticated(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("task changed since it was loaded (now at version {current_version}); reload and reapply")]
    VersionConflict { current_version: u64 },
    #[error("{message}")]
    InvalidState { message: String, current_version: u64 },
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Validation(String),
    #[error("event log entry {seq}: {reason}")]
    Replay { seq: u64, reason: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AnnotateError {
    pub fn status(&self) -> StatusCode {
        match self {
            AnnotateError::Unauthenticated(_) => StatusCode::UNAUTHORIZED,
            AnnotateError::Forbidden(_) => StatusCode::FORBIDDEN,
            AnnotateError::NotFound(_) => StatusCode::NOT_FOUND,
            AnnotateError::VersionConflict { .. } | AnnotateError::InvalidState { .. } | AnnotateError::Conflict(_) => {
                StatusCode::CONFLICT
            }
            AnnotateError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotateError::Replay { .. }
            | AnnotateError::Dataset(_)
            | AnnotateError::Io(_)
            | AnnotateError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            AnnotateError::Unauthenticated(_) => "unauthenticated",
            AnnotateError::Forbidden(_) => "forbidden",
            AnnotateError::NotFound(_) => "not_found",
            AnnotateError::VersionConflict { .. } => "version_conflict",
            AnnotateError::InvalidState { .. } => "invalid_state",
            AnnotateError::Conflict(_) => "conflict",
            AnnotateError::Validation(_) => "validation",
            AnnotateError::Replay { .. } | AnnotateError::Dataset(_) | AnnotateError::Io(_) | AnnotateError::Json(_) => {
                "internal"
            }
        }
    }

    pub fn current_version(&self) -> Option<u64> {
        match self {
            AnnotateError::VersionConflict { current_version } | AnnotateError::InvalidState { current_version, .. } => {
                Some(*current_version)
            }
            _ => None,
        }
    }
}
