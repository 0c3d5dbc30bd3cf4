//! RDT-RAW: a minimal little-endian volume file.
//!
//! ```text
//! header (60 bytes)
//!   0  magic           4   "RDT1"
//!   4  format_version  u16 = 1
//!   6  site_id         8   ASCII/UTF-8, space padded
//!  14  site_lat_deg    f64
//!  22  site_lon_deg    f64
//!  30  site_alt_m      f32
//!  34  vcp_name        16  space padded
//!  50  volume_time_ns  i64 (Unix epoch, UTC)
//!  58  sweep_count     u16 >= 1
//! sweep block, repeated sweep_count times (17-byte fixed part)
//!   elevation_deg f32 | n_rays u16 | n_gates u16 | range_start_m f32 |
//!   range_step_m f32 | moment_count u8
//!   per moment: code (first 4 bytes of the moment code, space padded) + n_rays*n_gates f32, ray-major
//!   azimuth_deg  n_rays f32
//!   ray offsets  n_rays u32, milliseconds after volume_time
//! ```
//! Missing values are the quiet NaN `0x7FC00000`. Nothing may follow the
//! last sweep block.

use std::collections::BTreeMap;

use ndarray::Array2;
use thiserror::Error;

use crate::model::{MomentKind, Site, Sweep, SweepGeometry, VolumeScan};
use crate::time::Timestamp;

pub const MAGIC: [u8; 4] = *b"RDT1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 60;
pub const SWEEP_HEADER_LEN: usize = 17;
pub const MISSING_BITS: u32 = 0x7FC0_0000;

const SITE_ID_LEN: usize = 8;
const VCP_NAME_LEN: usize = 16;
const CODE_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RawError {
    #[error("bad magic {found:02x?} at offset {offset}")]
    BadMagic { offset: usize, found: [u8; 4] },
    #[error("unsupported format version {version} at offset {offset}")]
    UnsupportedVersion { offset: usize, version: u16 },
    #[error("truncated {field} at offset {offset}: need {needed} bytes, {available} available")]
    Truncated { offset: usize, field: &'static str, needed: usize, available: usize },
    #[error("unknown moment code {code:?} at offset {offset}")]
    UnknownMoment { offset: usize, code: String },
    #[error("invalid {field} at offset {offset}: {detail}")]
    Invalid { offset: usize, field: &'static str, detail: String },
    #[error("{extra} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

impl RawError {
    /// Byte offset the error refers to; never exceeds the input length.
    pub fn offset(&self) -> usize {
        match self {
            RawError::BadMagic { offset, .. }
            | RawError::UnsupportedVersion { offset, .. }
            | RawError::Truncated { offset, .. }
            | RawError::UnknownMoment { offset, .. }
            | RawError::Invalid { offset, .. }
            | RawError::TrailingBytes { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("{field} is {len} bytes, limit is {max}")]
    FieldTooLong { field: &'static str, len: usize, max: usize },
    #[error("{field} value {value} does not fit the format")]
    OutOfRange { field: &'static str, value: String },
    #[error(transparent)]
    InvalidVolume(#[from] crate::model::ModelError),
}

/// Fixed header fields, readable without decoding the sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct RawHeader {
    pub site: Site,
    pub vcp_name: String,
    pub volume_time: Timestamp,
    pub sweep_count: u16,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], RawError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(RawError::Truncated { offset: self.pos, field, needed: n, available });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], RawError> {
        Ok(self.take(N, field)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, RawError> {
        Ok(self.array::<1>(field)?[0])
    }
    fn u16(&mut self, field: &'static str) -> Result<u16, RawError> {
        Ok(u16::from_le_bytes(self.array(field)?))
    }
    fn i64(&mut self, field: &'static str) -> Result<i64, RawError> {
        Ok(i64::from_le_bytes(self.array(field)?))
    }
    fn f32(&mut self, field: &'static str) -> Result<f32, RawError> {
        Ok(f32::from_le_bytes(self.array(field)?))
    }
    fn f64(&mut self, field: &'static str) -> Result<f64, RawError> {
        Ok(f64::from_le_bytes(self.array(field)?))
    }

    fn text(&mut self, n: usize, field: &'static str) -> Result<String, RawError> {
        let offset = self.pos;
        let raw = self.take(n, field)?;
        let trimmed = raw.iter().rposition(|&b| b != b' ').map_or(&raw[..0], |i| &raw[..=i]);
        std::str::from_utf8(trimmed)
            .map(str::to_string)
            .map_err(|e| RawError::Invalid { offset, field, detail: e.to_string() })
    }

    fn f32_vec(&mut self, n: usize, field: &'static str) -> Result<Vec<f32>, RawError> {
        let bytes = self.take(n * 4, field)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_nan() {
                    f32::from_bits(MISSING_BITS)
                } else {
                    v
                }
            })
            .collect())
    }
}

fn header_from(r: &mut Reader<'_>) -> Result<RawHeader, RawError> {
    let magic = r.array::<4>("magic")?;
    if magic != MAGIC {
        return Err(RawError::BadMagic { offset: 0, found: magic });
    }
    let version = r.u16("format_version")?;
    if version != FORMAT_VERSION {
        return Err(RawError::UnsupportedVersion { offset: 4, version });
    }
    let id = r.text(SITE_ID_LEN, "site_id")?;
    let latitude_deg = r.f64("site_latitude")?;
    let longitude_deg = r.f64("site_longitude")?;
    let altitude_m = r.f32("site_altitude")?;
    let vcp_offset = r.pos;
    let vcp_name = r.text(VCP_NAME_LEN, "vcp_name")?;
    if let Err(detail) = crate::model::validate_name(&vcp_name) {
        return Err(RawError::Invalid { offset: vcp_offset, field: "vcp_name", detail });
    }
    let volume_time = Timestamp(r.i64("volume_time")?);
    let sweep_count = r.u16("sweep_count")?;
    if sweep_count == 0 {
        return Err(RawError::Invalid { offset: 58, field: "sweep_count", detail: "must be at least 1".into() });
    }
    Ok(RawHeader {
        site: Site { id, latitude_deg, longitude_deg, altitude_m },
        vcp_name,
        volume_time,
        sweep_count,
    })
}

/// Decode only the fixed header.
pub fn parse_header(bytes: &[u8]) -> Result<RawHeader, RawError> {
    header_from(&mut Reader { buf: bytes, pos: 0 })
}

/// Decode a complete file. Strict: trailing bytes are an error.
pub fn parse_rdt_raw(bytes: &[u8]) -> Result<VolumeScan, RawError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = header_from(&mut r)?;
    let mut sweeps = Vec::with_capacity(header.sweep_count as usize);
    for _ in 0..header.sweep_count {
        sweeps.push(parse_sweep(&mut r, header.volume_time)?);
    }
    if r.pos != bytes.len() {
        return Err(RawError::TrailingBytes { offset: r.pos, extra: bytes.len() - r.pos });
    }
    Ok(VolumeScan { vcp_name: header.vcp_name, volume_time: header.volume_time, site: header.site, sweeps })
}

fn parse_sweep(r: &mut Reader<'_>, volume_time: Timestamp) -> Result<Sweep, RawError> {
    let block_start = r.pos;
    let elevation_deg = r.f32("elevation")?;
    let n_rays = r.u16("n_rays")? as usize;
    let n_gates = r.u16("n_gates")? as usize;
    let range_start_m = r.f32("range_start")?;
    let range_step_m = r.f32("range_step")?;
    let moment_count = r.u8("moment_count")?;
    if n_rays == 0 || n_gates == 0 {
        return Err(RawError::Invalid {
            offset: block_start + 4,
            field: "sweep dimensions",
            detail: format!("{n_rays} rays x {n_gates} gates"),
        });
    }

    let mut moments = BTreeMap::new();
    for _ in 0..moment_count {
        let code_offset = r.pos;
        let code = r.text(CODE_LEN, "moment code")?;
        let kind = MomentKind::from_wire_code(&code).ok_or_else(|| RawError::UnknownMoment { offset: code_offset, code: code.clone() })?;
        let data_offset = r.pos;
        let values = r.f32_vec(n_rays * n_gates, "moment data")?;
        if let Some(v) = values.iter().find(|v| !kind.check_value(**v)) {
            return Err(RawError::Invalid { offset: data_offset, field: "moment data", detail: format!("{kind} value {v}") });
        }
        let arr = Array2::from_shape_vec((n_rays, n_gates), values).expect("length checked");
        if moments.insert(kind, arr).is_some() {
            return Err(RawError::Invalid { offset: code_offset, field: "moment code", detail: format!("duplicate {kind}") });
        }
    }

    let az_offset = r.pos;
    let azimuth_deg = r.f32_vec(n_rays, "azimuths")?;
    if let Some(a) = azimuth_deg.iter().find(|a| !(0.0..360.0).contains(*a)) {
        return Err(RawError::Invalid { offset: az_offset, field: "azimuths", detail: format!("{a} outside [0, 360)") });
    }
    let times_offset = r.pos;
    let offsets = r.take(n_rays * 4, "ray time offsets")?;
    let mut ray_times = Vec::with_capacity(n_rays);
    for c in offsets.chunks_exact(4) {
        let ms = u32::from_le_bytes(c.try_into().unwrap());
        let t = volume_time.add_millis(ms as i64).ok_or_else(|| RawError::Invalid {
            offset: times_offset,
            field: "ray time offsets",
            detail: "time overflow".into(),
        })?;
        ray_times.push(t);
    }
    let sweep = Sweep {
        geometry: SweepGeometry { elevation_deg, azimuth_deg, range_start_m, range_step_m, n_gates, ray_times },
        moments,
    };
    sweep
        .validate()
        .map_err(|e| RawError::Invalid { offset: block_start, field: "sweep", detail: e.to_string() })?;
    Ok(sweep)
}

fn put_text(out: &mut Vec<u8>, text: &str, len: usize, field: &'static str) -> Result<(), EncodeError> {
    let b = text.as_bytes();
    if b.len() > len {
        return Err(EncodeError::FieldTooLong { field, len: b.len(), max: len });
    }
    out.extend_from_slice(b);
    out.resize(out.len() + len - b.len(), b' ');
    Ok(())
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    let bits = if v.is_nan() { MISSING_BITS } else { v.to_bits() };
    out.extend_from_slice(&bits.to_le_bytes());
}

/// Exact encoded length of `volume`.
pub fn encoded_len(volume: &VolumeScan) -> usize {
    HEADER_LEN
        + volume
            .sweeps
            .iter()
            .map(|s| {
                let (r, g) = (s.geometry.n_rays(), s.geometry.n_gates);
                SWEEP_HEADER_LEN + s.moments.len() * (CODE_LEN + 4 * r * g) + 8 * r
            })
            .sum::<usize>()
}

/// Canonical encoding: moments in [`MomentKind`] order, NaN as `0x7FC00000`.
pub fn encode_rdt_raw(volume: &VolumeScan) -> Result<Vec<u8>, EncodeError> {
    volume.validate()?;
    if volume.site.id.ends_with(' ') {
        return Err(EncodeError::OutOfRange { field: "site_id", value: format!("{:?}", volume.site.id) });
    }
    let too_many = |field, n: usize| EncodeError::OutOfRange { field, value: n.to_string() };
    let mut out = Vec::with_capacity(encoded_len(volume));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_text(&mut out, &volume.site.id, SITE_ID_LEN, "site_id")?;
    out.extend_from_slice(&volume.site.latitude_deg.to_le_bytes());
    out.extend_from_slice(&volume.site.longitude_deg.to_le_bytes());
    out.extend_from_slice(&volume.site.altitude_m.to_le_bytes());
    put_text(&mut out, &volume.vcp_name, VCP_NAME_LEN, "vcp_name")?;
    out.extend_from_slice(&volume.volume_time.0.to_le_bytes());
    let n_sweeps = u16::try_from(volume.sweeps.len()).map_err(|_| too_many("sweep_count", volume.sweeps.len()))?;
    out.extend_from_slice(&n_sweeps.to_le_bytes());

    for sweep in &volume.sweeps {
        let g = &sweep.geometry;
        let n_rays = u16::try_from(g.n_rays()).map_err(|_| too_many("n_rays", g.n_rays()))?;
        let n_gates = u16::try_from(g.n_gates).map_err(|_| too_many("n_gates", g.n_gates))?;
        let n_moments = u8::try_from(sweep.moments.len()).map_err(|_| too_many("moment_count", sweep.moments.len()))?;
        out.extend_from_slice(&g.elevation_deg.to_le_bytes());
        out.extend_from_slice(&n_rays.to_le_bytes());
        out.extend_from_slice(&n_gates.to_le_bytes());
        out.extend_from_slice(&g.range_start_m.to_le_bytes());
        out.extend_from_slice(&g.range_step_m.to_le_bytes());
        out.push(n_moments);
        for (kind, arr) in &sweep.moments {
            put_text(&mut out, kind.wire_code(), CODE_LEN, "moment code")?;
            for v in arr.iter() {
                put_f32(&mut out, *v);
            }
        }
        for a in &g.azimuth_deg {
            out.extend_from_slice(&a.to_le_bytes());
        }
        for t in &g.ray_times {
            let delta = t.0.checked_sub(volume.volume_time.0).filter(|d| *d >= 0 && d % 1_000_000 == 0);
            let ms = delta
                .and_then(|d| u32::try_from(d / 1_000_000).ok())
                .ok_or_else(|| EncodeError::OutOfRange { field: "ray time", value: t.to_string() })?;
            out.extend_from_slice(&ms.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), encoded_len(volume));
    Ok(out)
}
