use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::chunkstore::ChunkStoreError;
use crate::ingest::{EncodeError, RawError, ScanError, SynthError};
use crate::model::ModelError;
use crate::txn::{ConflictReport, TxnError};

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Input(String),
    #[error("{message}")]
    Conflict { message: String, report: ConflictReport },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Raw(#[from] RawError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Store(#[from] ChunkStoreError),
    #[error(transparent)]
    Txn(#[from] TxnError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Broad failure classes, one per process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Internal,
    Input,
    Conflict,
    Path,
    Rollback,
}

fn store_class(e: &ChunkStoreError) -> ErrorClass {
    match e {
        ChunkStoreError::UnknownPath(_) => ErrorClass::Path,
        ChunkStoreError::OutOfBounds(_)
        | ChunkStoreError::RankMismatch(_)
        | ChunkStoreError::TypeMismatch { .. }
        | ChunkStoreError::InvalidArgument(_) => ErrorClass::Input,
        _ => ErrorClass::Internal,
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            Error::Input(_) | Error::Raw(_) | Error::Encode(_) | Error::Synth(_) | Error::Scan(_) => Input,
            Error::Conflict { .. } => Conflict,
            Error::Model(e) => match e {
                ModelError::NotFound { .. } | ModelError::InvalidPath(_) => Path,
                _ => Input,
            },
            Error::Store(e) => store_class(e),
            Error::Txn(e) => match e {
                TxnError::StaleBase { .. } => Conflict,
                TxnError::InvalidRollback { .. } => Rollback,
                TxnError::UnknownBranch(_) | TxnError::UnknownSnapshot(_) | TxnError::NotARepository(_) => Path,
                TxnError::InvalidBranchName(_) | TxnError::BranchExists(_) | TxnError::InvalidArgument(_) => Input,
                TxnError::Store(e) => store_class(e),
                _ => Internal,
            },
            Error::Analysis(e) => match e {
                AnalysisError::NotFound(_) => Path,
                AnalysisError::Store(e) => store_class(e),
                AnalysisError::Io(_) => Internal,
                _ => Input,
            },
            Error::Io(_) => Internal,
        }
    }

    /// Conflict details, when the error carries them.
    pub fn conflict_report(&self) -> Option<&ConflictReport> {
        match self {
            Error::Conflict { report, .. } | Error::Txn(TxnError::StaleBase { report, .. }) => Some(report),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
