//! Scientific products computed against snapshots: quasi-vertical profiles,
//! rainfall accumulation and point time series.
//!
//! Reductions run in 64-bit floating point in a fixed order (left to right
//! over ray index for azimuthal means, over time index for accumulation), so
//! results are reproducible bit for bit and match the raw-file pipeline in
//! [`baseline`].

pub mod baseline;
mod geo;
mod products;
mod qpe;
mod qvp;
mod sweep;
mod timeseries;
mod zr;

use thiserror::Error;

use crate::chunkstore::ChunkStoreError;
use crate::ingest::RawError;

pub use geo::{beam_height, bearing_deg, great_circle_m, locate_gate, slant_range_m, GatePointer, GeoPoint, SweepAxes};
pub use geo::{EARTH_RADIUS_M, EFFECTIVE_EARTH_RADIUS_M};
pub use products::{decode_bin, Format, NamedArray, Product, BIN_MAGIC};
pub use qpe::{accumulate_qpe, qpe_kernel, AccumulationGrid, DEFAULT_MAX_GAP_S};
pub use qvp::{qvp, qvp_kernel, QvpProfile, DEFAULT_VALID_FRACTION};
pub use sweep::{median, SweepHandle};
pub use timeseries::{extract_timeseries, Timeseries};
pub use zr::{dbz_to_rate, rate_to_dbz, RateCurve, ZrParams};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("time range selects no scans")]
    EmptySelection,
    #[error("need at least 2 scans, time range selects {0}")]
    InsufficientData(usize),
    #[error("target is {distance_m:.0} m (slant {slant_m:.0} m) from the radar, beyond coverage of {max_m:.0} m")]
    OutOfCoverage { distance_m: f64, slant_m: f64, max_m: f64 },
    #[error(transparent)]
    Store(#[from] ChunkStoreError),
    #[error("{path}: {source}")]
    Raw { path: String, source: RawError },
    #[error("{0}")]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;
