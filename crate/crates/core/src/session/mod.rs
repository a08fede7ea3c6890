//! Annotation sessions: manifests, batch sampling, the file-backed session
//! store, record CSV interchange and label aggregation.

mod labels;
mod manifest;
mod records_csv;
mod sampling;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use labels::{
    aggregate_labels, export_labels, import_labels, summary_path, ExportSummary, Label, LabelSet,
    LABELS_HEADER,
};
pub use manifest::{
    filter_manifest, read_manifest_csv, write_manifest_csv, ImageManifestEntry,
    DEFAULT_CONFIDENCE_THRESHOLD, MANIFEST_HEADER,
};
pub use records_csv::{read_records_csv, write_records_csv, RECORDS_HEADER};
pub use sampling::{sample_batch, SplitMix64};
pub use store::{Acknowledgment, ImportSummary, SessionStore};

/// Annotator counts outside this range are allowed but reported.
pub const RECOMMENDED_ANNOTATORS: (usize, usize) = (3, 4);

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("{0}")]
    Validation(String),
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("session `{0}` is closed")]
    Closed(String),
    #[error("{0}")]
    InvalidReference(String),
    #[error("store {0} is locked by another process (remove LOCK if no process holds it)")]
    Locked(PathBuf),
    #[error("corrupt store file {path} at line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl SessionError {
    pub(crate) fn csv(err: csv::Error) -> Self {
        if !err.is_io_error() {
            return SessionError::Csv(err.to_string());
        }
        match err.into_kind() {
            csv::ErrorKind::Io(io) => SessionError::Io(io),
            _ => unreachable!("checked is_io_error"),
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, SessionError::Io(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub schema_version: String,
    pub batch: Vec<String>,
    pub annotator_ids: BTreeSet<String>,
    pub seed: u64,
    #[serde(with = "crate::record::iso8601")]
    pub created_at: DateTime<Utc>,
    pub status: SessionStatus,
    /// Image file paths for batch members, when known from a manifest.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub image_paths: BTreeMap<String, String>,
}

impl Session {
    pub fn is_open(&self) -> bool {
        self.status == SessionStatus::Open
    }

    pub fn contains_image(&self, image_id: &str) -> bool {
        self.batch.iter().any(|i| i == image_id)
    }
}

/// Parameters for [`SessionStore::create_session`].
#[derive(Debug, Clone, Default)]
pub struct NewSession {
    /// Generated as `session-NNNN` when absent.
    pub session_id: Option<String>,
    pub batch: Vec<String>,
    /// An empty set admits any annotator id.
    pub annotators: Vec<String>,
    pub seed: u64,
    pub image_paths: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session: Session,
    pub warnings: Vec<String>,
}

/// Ids usable as directory names: ASCII alphanumerics, `-`, `_` and `.`,
/// not starting with `.`, at most 128 bytes.
pub fn is_valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}
