use std::io::{self, Write};
use std::time::Instant;

use rdt_core::txn::ConflictReport;
use rdt_core::ErrorClass;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{EXIT_BENCH_INVALID, EXIT_CONFLICT, EXIT_INPUT, EXIT_INTERNAL, EXIT_PATH, EXIT_ROLLBACK};

/// A failed command: exit status plus what to tell the operator.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub conflicts: Option<ConflictReport>,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into(), conflicts: None }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }

    pub fn path(message: impl Into<String>) -> Self {
        Self::new(EXIT_PATH, message)
    }

    pub fn bench_invalid(message: impl Into<String>) -> Self {
        Self::new(EXIT_BENCH_INVALID, message)
    }
}

impl From<rdt_core::Error> for Failure {
    fn from(e: rdt_core::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Internal => EXIT_INTERNAL,
            ErrorClass::Input => EXIT_INPUT,
            ErrorClass::Conflict => EXIT_CONFLICT,
            ErrorClass::Path => EXIT_PATH,
            ErrorClass::Rollback => EXIT_ROLLBACK,
        };
        Failure { code, message: e.to_string(), conflicts: e.conflict_report().cloned() }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                rdt_core::Error::from(e).into()
            }
        }
    )*};
}

via_core_error!(
    rdt_core::txn::TxnError,
    rdt_core::analysis::AnalysisError,
    rdt_core::chunkstore::ChunkStoreError,
    rdt_core::model::ModelError,
    rdt_core::ingest::SynthError,
    rdt_core::ingest::EncodeError
);

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::new(EXIT_INTERNAL, e.to_string())
    }
}

/// Store-versus-baseline timing of one product.
#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub task: String,
    pub baseline_seconds: f64,
    pub store_seconds: f64,
    /// `baseline / store`; absent when the products differ.
    pub speedup: Option<f64>,
    pub volumes: usize,
    pub raw_bytes: u64,
    pub store_bytes: u64,
    /// `bitwise-equal` or `mismatch`.
    pub equality: String,
}

/// One machine-readable summary per invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub parameters: Map<String, Value>,
    pub snapshot_read: Option<String>,
    pub snapshot_written: Option<String>,
    pub wall_time_s: f64,
    pub chunks_fetched: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub exit_status: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflicts: Option<ConflictReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchResult>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            parameters: Map::new(),
            snapshot_read: None,
            snapshot_written: None,
            wall_time_s: 0.0,
            chunks_fetched: 0,
            bytes_read: 0,
            bytes_written: 0,
            exit_status: 0,
            error: None,
            conflicts: None,
            warnings: Vec::new(),
            bench: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Record the outcome; returns the exit status.
    pub fn finish(&mut self, started: Instant, result: Result<(), &Failure>) -> i32 {
        self.wall_time_s = started.elapsed().as_secs_f64();
        self.exit_status = match result {
            Ok(()) => 0,
            Err(f) => {
                self.error = Some(f.message.clone());
                self.conflicts = f.conflicts.clone();
                f.code
            }
        };
        self.exit_status
    }

    /// Write the report as one line of JSON.
    pub fn emit(&self, w: &mut dyn Write) -> io::Result<()> {
        serde_json::to_writer(&mut *w, self)?;
        w.write_all(b"\n")
    }
}
