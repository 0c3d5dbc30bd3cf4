//! In-memory radar data model: sweeps, volume scans and the time-aligned tree.

mod canonical;
mod path;
mod tree;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

pub use canonical::{canonical_azimuths, canonicalize_azimuths};
pub use path::{resolve_path, sweep_name, Node, TreePath};
pub use tree::{build_tree, build_tree_with, RadarTree, SweepGroup, TreeOptions, VcpGroup};
pub use validate::{validate_structure, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("duplicate volume time {time} in {vcp}")]
    DuplicateTime { vcp: String, time: Timestamp },
    #[error("volume at {time} is not after last time {last} in {vcp}")]
    OutOfOrder { vcp: String, time: Timestamp, last: Timestamp },
    #[error("geometry conflict in {vcp} sweep {sweep}: {detail}")]
    GeometryConflict { vcp: String, sweep: usize, detail: String },
    #[error("site mismatch: tree holds {expected}, volume from {found}")]
    SiteMismatch { expected: String, found: String },
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("path {path:?} not found (resolved up to {resolved_prefix:?})")]
    NotFound { path: String, resolved_prefix: String },
}

/// Radar moment (measured variable).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MomentKind {
    /// Horizontal reflectivity, dBZ.
    Dbzh,
    /// Radial velocity, m/s.
    Vradh,
    /// Differential reflectivity, dB.
    Zdr,
    /// Co-polar correlation coefficient.
    Rhohv,
    /// Differential phase, degrees.
    Phidp,
}

impl MomentKind {
    pub const ALL: [MomentKind; 5] = [
        MomentKind::Dbzh,
        MomentKind::Vradh,
        MomentKind::Zdr,
        MomentKind::Rhohv,
        MomentKind::Phidp,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MomentKind::Dbzh => "DBZH",
            MomentKind::Vradh => "VRADH",
            MomentKind::Zdr => "ZDR",
            MomentKind::Rhohv => "RHOHV",
            MomentKind::Phidp => "PHIDP",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }

    /// Four-byte code used in raw files: `code()` cut to four bytes.
    pub fn wire_code(self) -> &'static str {
        &self.code()[..self.code().len().min(4)]
    }

    pub fn from_wire_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.wire_code() == code)
    }

    pub fn units(self) -> &'static str {
        match self {
            MomentKind::Dbzh => "dBZ",
            MomentKind::Vradh => "m/s",
            MomentKind::Zdr => "dB",
            MomentKind::Rhohv => "1",
            MomentKind::Phidp => "degrees",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            MomentKind::Dbzh => "equivalent reflectivity factor h",
            MomentKind::Vradh => "radial velocity of scatterers away from instrument h",
            MomentKind::Zdr => "log differential reflectivity hv",
            MomentKind::Rhohv => "cross correlation ratio hv",
            MomentKind::Phidp => "differential phase hv",
        }
    }

    /// Admissible interval for finite values, if the moment has one.
    /// The upper bound is inclusive for RHOHV and exclusive for PHIDP.
    pub fn check_value(self, v: f32) -> bool {
        if !v.is_finite() {
            return v.is_nan();
        }
        match self {
            MomentKind::Rhohv => (0.0..=1.05).contains(&v),
            MomentKind::Phidp => (-180.0..360.0).contains(&v),
            _ => true,
        }
    }
}

impl fmt::Display for MomentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl From<MomentKind> for String {
    fn from(m: MomentKind) -> String {
        m.code().to_string()
    }
}

impl TryFrom<String> for MomentKind {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        MomentKind::from_code(&s).ok_or_else(|| format!("unknown moment code {s:?}"))
    }
}

impl std::str::FromStr for MomentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        MomentKind::try_from(s.to_string())
    }
}

/// Radar site location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f32,
}

impl Site {
    fn same_as(&self, other: &Site) -> bool {
        self.id == other.id
            && self.latitude_deg.to_bits() == other.latitude_deg.to_bits()
            && self.longitude_deg.to_bits() == other.longitude_deg.to_bits()
            && self.altitude_m.to_bits() == other.altitude_m.to_bits()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}, {}, {} m)", self.id, self.latitude_deg, self.longitude_deg, self.altitude_m)
    }
}

#[derive(Clone, Debug)]
pub struct SweepGeometry {
    pub elevation_deg: f32,
    /// Ray centre azimuths in degrees, `[0, 360)`, in acquisition order.
    pub azimuth_deg: Vec<f32>,
    pub range_start_m: f32,
    pub range_step_m: f32,
    pub n_gates: usize,
    pub ray_times: Vec<Timestamp>,
}

impl SweepGeometry {
    pub fn n_rays(&self) -> usize {
        self.azimuth_deg.len()
    }

    /// Gate centre distances, `start + i * step` evaluated in f32.
    pub fn range_axis(&self) -> Vec<f32> {
        range_axis(self.range_start_m, self.range_step_m, self.n_gates)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSweep(m));
        if self.azimuth_deg.is_empty() {
            return bad("sweep has no rays".into());
        }
        if let Some(a) = self.azimuth_deg.iter().find(|a| !(0.0..360.0).contains(*a)) {
            return bad(format!("azimuth {a} outside [0, 360)"));
        }
        if !(self.range_step_m > 0.0) || !self.range_step_m.is_finite() {
            return bad(format!("range step {} must be positive", self.range_step_m));
        }
        if !self.range_start_m.is_finite() {
            return bad("range start is not finite".into());
        }
        if self.n_gates == 0 {
            return bad("sweep has no gates".into());
        }
        if self.ray_times.len() != self.azimuth_deg.len() {
            return bad(format!(
                "{} ray times for {} rays",
                self.ray_times.len(),
                self.azimuth_deg.len()
            ));
        }
        if !self.elevation_deg.is_finite() {
            return bad("elevation is not finite".into());
        }
        Ok(())
    }
}

pub fn range_axis(start: f32, step: f32, n: usize) -> Vec<f32> {
    (0..n).map(|i| start + i as f32 * step).collect()
}

/// One rotation at a fixed elevation. Moment arrays are azimuth x range.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub geometry: SweepGeometry,
    pub moments: BTreeMap<MomentKind, Array2<f32>>,
}

impl Sweep {
    /// Structural checks on an acquisition-order sweep.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.geometry.validate()?;
        if self.geometry.ray_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(ModelError::InvalidSweep("ray times decrease".into()));
        }
        self.validate_moments()
    }

    pub(crate) fn validate_moments(&self) -> Result<(), ModelError> {
        let shape = [self.geometry.n_rays(), self.geometry.n_gates];
        for (kind, arr) in &self.moments {
            if arr.shape() != shape {
                return Err(ModelError::InvalidSweep(format!(
                    "{kind} has shape {:?}, expected {:?}",
                    arr.shape(),
                    shape
                )));
            }
            if let Some(v) = arr.iter().find(|v| !kind.check_value(**v)) {
                return Err(ModelError::InvalidSweep(format!("{kind} value {v} out of range")));
            }
        }
        Ok(())
    }
}

/// One volume scan: all sweeps of one coverage pattern instance.
#[derive(Clone, Debug)]
pub struct VolumeScan {
    pub vcp_name: String,
    pub volume_time: Timestamp,
    pub site: Site,
    pub sweeps: Vec<Sweep>,
}

impl VolumeScan {
    pub fn validate(&self) -> Result<(), ModelError> {
        validate_name(&self.vcp_name).map_err(ModelError::InvalidVolume)?;
        if self.sweeps.is_empty() {
            return Err(ModelError::InvalidVolume("volume has no sweeps".into()));
        }
        if self.volume_time.is_nat() {
            return Err(ModelError::InvalidVolume("volume time missing".into()));
        }
        for (k, s) in self.sweeps.iter().enumerate() {
            s.validate().map_err(|e| ModelError::InvalidVolume(format!("sweep {k}: {e}")))?;
        }
        Ok(())
    }
}

/// Group names become path segments.
pub(crate) fn validate_name(name: &str) -> Result<(), String> {
    if name.is_empty() {
        return Err("name is empty".into());
    }
    if name.contains(['/', '\\']) {
        return Err(format!("name {name:?} contains a path separator"));
    }
    if name.trim() != name {
        return Err(format!("name {name:?} has surrounding whitespace"));
    }
    Ok(())
}

/// Equality on bit patterns, so NaN == NaN and -0.0 != 0.0.
pub trait BitwiseEq {
    fn bitwise_eq(&self, other: &Self) -> bool;
}

impl BitwiseEq for f32 {
    fn bitwise_eq(&self, other: &Self) -> bool {
        self.to_bits() == other.to_bits()
    }
}

impl BitwiseEq for f64 {
    fn bitwise_eq(&self, other: &Self) -> bool {
        self.to_bits() == other.to_bits()
    }
}

impl<T: BitwiseEq> BitwiseEq for [T] {
    fn bitwise_eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other).all(|(a, b)| a.bitwise_eq(b))
    }
}

impl<T: BitwiseEq> BitwiseEq for Vec<T> {
    fn bitwise_eq(&self, other: &Self) -> bool {
        self.as_slice().bitwise_eq(other.as_slice())
    }
}

impl<T: BitwiseEq, D: ndarray::Dimension> BitwiseEq for ndarray::Array<T, D> {
    fn bitwise_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.iter().zip(other.iter()).all(|(a, b)| a.bitwise_eq(b))
    }
}

impl BitwiseEq for SweepGeometry {
    fn bitwise_eq(&self, o: &Self) -> bool {
        self.elevation_deg.bitwise_eq(&o.elevation_deg)
            && self.azimuth_deg.bitwise_eq(&o.azimuth_deg)
            && self.range_start_m.bitwise_eq(&o.range_start_m)
            && self.range_step_m.bitwise_eq(&o.range_step_m)
            && self.n_gates == o.n_gates
            && self.ray_times == o.ray_times
    }
}

impl BitwiseEq for Sweep {
    fn bitwise_eq(&self, o: &Self) -> bool {
        self.geometry.bitwise_eq(&o.geometry)
            && self.moments.len() == o.moments.len()
            && self
                .moments
                .iter()
                .zip(&o.moments)
                .all(|((ka, a), (kb, b))| ka == kb && a.bitwise_eq(b))
    }
}

impl BitwiseEq for VolumeScan {
    fn bitwise_eq(&self, o: &Self) -> bool {
        self.vcp_name == o.vcp_name
            && self.volume_time == o.volume_time
            && self.site.same_as(&o.site)
            && self.sweeps.bitwise_eq(&o.sweeps)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use ndarray::Array2;

    pub fn site() -> Site {
        Site { id: "KVNX".into(), latitude_deg: 36.7406, longitude_deg: -98.1279, altitude_m: 378.0 }
    }

    /// Sweep on the canonical `n_rays` grid with every moment value from `f(ray, gate)`.
    pub fn sweep(n_rays: usize, n_gates: usize, t0: Timestamp, f: impl Fn(usize, usize) -> f32) -> Sweep {
        let azimuth_deg = canonical_azimuths(n_rays);
        let ray_times = (0..n_rays).map(|i| t0.add_millis(i as i64).unwrap()).collect();
        let dbz = Array2::from_shape_fn((n_rays, n_gates), |(r, g)| f(r, g));
        Sweep {
            geometry: SweepGeometry {
                elevation_deg: 0.5,
                azimuth_deg,
                range_start_m: 125.0,
                range_step_m: 250.0,
                n_gates,
                ray_times,
            },
            moments: BTreeMap::from([(MomentKind::Dbzh, dbz)]),
        }
    }

    pub fn volume(vcp: &str, t: i64, n_sweeps: usize, n_rays: usize, n_gates: usize) -> VolumeScan {
        let time = Timestamp::from_seconds(t);
        VolumeScan {
            vcp_name: vcp.into(),
            volume_time: time,
            site: site(),
            sweeps: (0..n_sweeps)
                .map(|k| sweep(n_rays, n_gates, time, |r, g| (t as f32) + (k * 1000 + r * 10 + g) as f32 * 0.01))
                .collect(),
        }
    }
}
