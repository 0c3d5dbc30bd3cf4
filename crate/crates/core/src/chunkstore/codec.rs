//! Chunk compression with self-describing frames.
//!
//! Frame layout (little-endian):
//! ```text
//! 0  codec tag        u8   (0 = raw, 1 = deflate)
//! 1  level            u8
//! 2  uncompressed len u64
//! 10 crc32            u32  (of the uncompressed bytes)
//! 14 payload
//! ```

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_HEADER_LEN: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unknown codec {0:?}")]
    UnknownCodec(String),
    #[error("invalid level {level} for codec {codec}")]
    InvalidLevel { codec: String, level: u32 },
    #[error("corrupt frame: {0}")]
    CorruptFrame(String),
}

/// Registered codec plus its parameter.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecSpec {
    pub id: String,
    pub level: u32,
}

impl CodecSpec {
    pub fn raw() -> Self {
        CodecSpec { id: "raw".into(), level: 0 }
    }

    pub fn deflate(level: u32) -> Self {
        CodecSpec { id: "deflate".into(), level }
    }

    fn tag(&self) -> Result<u8, CodecError> {
        match (self.id.as_str(), self.level) {
            ("raw", 0) => Ok(0),
            ("deflate", 0..=9) => Ok(1),
            ("raw" | "deflate", level) => Err(CodecError::InvalidLevel { codec: self.id.clone(), level }),
            (other, _) => Err(CodecError::UnknownCodec(other.into())),
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        self.tag().map(|_| ())
    }
}

impl Default for CodecSpec {
    fn default() -> Self {
        CodecSpec::deflate(1)
    }
}

impl std::str::FromStr for CodecSpec {
    type Err = CodecError;

    /// `raw`, `deflate` or `deflate:<level>`.
    fn from_str(s: &str) -> Result<Self, CodecError> {
        let (id, level) = match s.split_once(':') {
            Some((id, l)) => (id, l.parse().map_err(|_| CodecError::UnknownCodec(s.into()))?),
            None if s == "deflate" => (s, 1),
            None => (s, 0),
        };
        let spec = CodecSpec { id: id.into(), level };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn compress(spec: &CodecSpec, bytes: &[u8]) -> Result<Vec<u8>, CodecError> {
    let tag = spec.tag()?;
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + bytes.len() / 2);
    out.push(tag);
    out.push(spec.level as u8);
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(bytes).to_le_bytes());
    match tag {
        0 => out.extend_from_slice(bytes),
        _ => {
            let mut enc = DeflateEncoder::new(out, Compression::new(spec.level));
            enc.write_all(bytes).expect("writing to a Vec cannot fail");
            out = enc.finish().expect("writing to a Vec cannot fail");
        }
    }
    Ok(out)
}

/// Inverse of [`compress`]; `codec_id` must match the frame.
pub fn decompress(codec_id: &str, frame: &[u8]) -> Result<Vec<u8>, CodecError> {
    let corrupt = |m: String| CodecError::CorruptFrame(m);
    if frame.len() < FRAME_HEADER_LEN {
        return Err(corrupt(format!("frame of {} bytes is shorter than its header", frame.len())));
    }
    let expected_tag = match codec_id {
        "raw" => 0,
        "deflate" => 1,
        other => return Err(CodecError::UnknownCodec(other.into())),
    };
    if frame[0] != expected_tag {
        return Err(corrupt(format!("frame tag {} does not match codec {codec_id}", frame[0])));
    }
    let len = u64::from_le_bytes(frame[2..10].try_into().unwrap());
    let crc = u32::from_le_bytes(frame[10..14].try_into().unwrap());
    let payload = &frame[FRAME_HEADER_LEN..];
    let len = usize::try_from(len).map_err(|_| corrupt("length overflow".into()))?;
    let out = match expected_tag {
        0 => {
            if payload.len() != len {
                return Err(corrupt(format!("payload is {} bytes, header says {len}", payload.len())));
            }
            payload.to_vec()
        }
        _ => {
            let mut out = Vec::with_capacity(len);
            DeflateDecoder::new(payload)
                .take(len as u64 + 1)
                .read_to_end(&mut out)
                .map_err(|e| corrupt(format!("deflate stream: {e}")))?;
            if out.len() != len {
                return Err(corrupt(format!("inflated to {} bytes, header says {len}", out.len())));
            }
            out
        }
    };
    if crc32fast::hash(&out) != crc {
        return Err(corrupt("checksum mismatch".into()));
    }
    Ok(out)
}
