//! Chunked, compressed, group-hierarchical array persistence.
//!
//! Arrays are cut into chunks along a [`ChunkGrid`]; each chunk is encoded,
//! framed by a [`codec`], and stored in an [`ObjectStore`] under the SHA-256
//! of its bytes. A [`Manifest`] maps every written chunk key to its object and
//! carries the group/array metadata documents. Manifests are immutable once
//! stored; writes go through a [`StagingArea`] and reads through a
//! [`SnapshotReader`].

mod array;
pub mod codec;
mod grid;
mod layout;
mod manifest;
mod object;

use thiserror::Error;

pub use array::{read_full, read_region, write_array, AccessTrace, Element, SnapshotReader, StagingArea};
pub use codec::{compress, decompress, CodecError, CodecSpec};
pub use grid::{chunk_of, ChunkGrid, ChunkKey};
pub use layout::{load_tree, load_tree_where, moment_path, read_site, store_tree, store_tree_incremental, ChunkPolicy};
pub use manifest::{canonical_json, ArrayEntry, ArrayMeta, AttrValue, Attributes, ChunkRef, DType, GroupMeta, Manifest};
pub use object::{FsObjectStore, MemObjectStore, ObjectId, ObjectStore};

#[derive(Debug, Error)]
pub enum ChunkStoreError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("unknown path {0:?}")]
    UnknownPath(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("type mismatch at {path}: array is {expected:?}, got {found:?}")]
    TypeMismatch { path: String, expected: DType, found: DType },
    #[error("rank mismatch: {0}")]
    RankMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("object {0} missing from store")]
    MissingObject(ObjectId),
    #[error("object {id} is corrupt: {detail}")]
    CorruptObject { id: ObjectId, detail: String },
    #[error("corrupt layout: {0}")]
    CorruptLayout(String),
    #[error("metadata document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ChunkStoreError {
    /// True for errors that mean stored data is missing or damaged.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            ChunkStoreError::MissingObject(_)
                | ChunkStoreError::CorruptObject { .. }
                | ChunkStoreError::Codec(CodecError::CorruptFrame(_))
                | ChunkStoreError::CorruptLayout(_)
        )
    }
}
