//! Snapshots, branches and atomic commits over the chunk store.
//!
//! A repository directory holds:
//! ```text
//! objects/<2 hex>/<64 hex>   chunk frames and manifest documents
//! snapshots/<id>.json        snapshot documents
//! refs/<branch>              head snapshot id, 64 hex + newline
//! wal/<id>.json              commit intents not yet resolved
//! ```
//! Commits are optimistic: the branch ref is compared and swapped under a
//! per-branch lock file, and a transaction whose base is no longer the head
//! fails with [`TxnError::StaleBase`] carrying a [`ConflictReport`].

mod delta;
mod repo;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunkstore::{canonical_json, ChunkStoreError, ObjectId};
use crate::time::Timestamp;

pub use delta::{appended_times, detect_conflict, Delta, TimeInterval};
pub use repo::{validate_branch_name, Repository, Transaction, TxnState};

pub type SnapshotId = ObjectId;

#[derive(Debug, Error)]
pub enum TxnError {
    #[error("unknown branch {0:?}")]
    UnknownBranch(String),
    #[error("branch {0:?} already exists")]
    BranchExists(String),
    #[error("invalid branch name {0:?}")]
    InvalidBranchName(String),
    #[error("unknown snapshot {0}")]
    UnknownSnapshot(String),
    #[error("branch {branch:?} moved from {base} to {head} since the transaction began ({report})")]
    StaleBase { branch: String, base: SnapshotId, head: SnapshotId, report: ConflictReport },
    #[error("transaction is {0}")]
    State(TxnState),
    #[error("snapshot {target} is not an ancestor of the head of {branch:?}")]
    InvalidRollback { branch: String, target: SnapshotId },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0} is not a repository")]
    NotARepository(String),
    #[error("repository is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Store(#[from] ChunkStoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TxnError {
    pub fn is_injected_crash(&self) -> bool {
        match self {
            TxnError::Io(e) => crate::persist::is_injected_crash(e),
            TxnError::Store(ChunkStoreError::Io(e)) => crate::persist::is_injected_crash(e),
            _ => false,
        }
    }
}

/// Immutable commit record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: SnapshotId,
    pub parent: SnapshotId,
    pub manifest: ObjectId,
    pub message: String,
    pub author: String,
    pub timestamp: Timestamp,
}

#[derive(Serialize)]
struct SnapshotIdInput<'a> {
    parent: &'a SnapshotId,
    manifest: &'a ObjectId,
    message: &'a str,
    author: &'a str,
    timestamp: Timestamp,
}

impl Snapshot {
    pub fn new(parent: SnapshotId, manifest: ObjectId, message: &str, author: &str, timestamp: Timestamp) -> Self {
        let id = ObjectId::of(&canonical_json(&SnapshotIdInput {
            parent: &parent,
            manifest: &manifest,
            message,
            author,
            timestamp,
        }));
        Snapshot { id, parent, manifest, message: message.into(), author: author.into(), timestamp }
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_zero()
    }

    /// Recompute the id from the other fields.
    pub fn verify(&self) -> bool {
        Snapshot::new(self.parent, self.manifest, &self.message, &self.author, self.timestamp).id == self.id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictKind {
    ChunkOverlap,
    MetadataDivergence,
    TimeRangeOverlap,
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictKind::ChunkOverlap => "chunk-overlap",
            ConflictKind::MetadataDivergence => "metadata-divergence",
            ConflictKind::TimeRangeOverlap => "time-range-overlap",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub path: String,
    pub kind: ConflictKind,
    pub detail: String,
}

/// Everything preventing a clean rebase; empty means the rebase is clean.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub conflicts: Vec<Conflict>,
}

impl ConflictReport {
    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }

    pub fn has(&self, kind: ConflictKind) -> bool {
        self.conflicts.iter().any(|c| c.kind == kind)
    }
}

impl fmt::Display for ConflictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conflicts.is_empty() {
            return f.write_str("no conflicts");
        }
        let shown: Vec<String> = self.conflicts.iter().take(3).map(|c| format!("{} at {}", c.kind, c.path)).collect();
        write!(f, "{}", shown.join(", "))?;
        if self.conflicts.len() > 3 {
            write!(f, " and {} more", self.conflicts.len() - 3)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
