//! Versioned, chunked archive engine for weather-radar volume collections.
//!
//! Raw sweep files are decoded ([`ingest`]), stacked into a time-aligned
//! hierarchy of per-pattern groups ([`model`]), persisted as compressed,
//! content-addressed chunks ([`chunkstore`]) under snapshot versioning
//! ([`txn`]), and analysed in place ([`analysis`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chunkstore;
mod error;
pub mod ingest;
pub mod model;
pub mod par;
pub mod persist;
pub mod pipeline;
pub mod time;
pub mod txn;

pub use error::{Error, ErrorClass, Result};
pub use time::{TimeRange, Timestamp};
