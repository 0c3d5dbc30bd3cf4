use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::codec::CodecSpec;
use super::grid::ChunkGrid;
use super::object::ObjectId;
use super::ChunkStoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Float64,
    Int64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::Float32 => 4,
            DType::Float64 | DType::Int64 => 8,
        }
    }
}

/// Scalar or text attribute value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Text(String),
    Int(i64),
    Float(f64),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Float(v) => Some(*v),
            AttrValue::Int(v) => Some(*v as f64),
            AttrValue::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Text(s.to_string())
    }
}

impl From<String> for AttrValue {
    fn from(s: String) -> Self {
        AttrValue::Text(s)
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Float(v)
    }
}

impl From<i64> for AttrValue {
    fn from(v: i64) -> Self {
        AttrValue::Int(v)
    }
}

pub type Attributes = BTreeMap<String, AttrValue>;

/// Self-description of one stored array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub shape: Vec<u64>,
    pub chunk_shape: Vec<u64>,
    pub dtype: DType,
    /// Bit pattern of the fill value, zero-extended to 64 bits.
    pub fill_value: u64,
    pub codec: CodecSpec,
    pub dimensions: Vec<String>,
    #[serde(default)]
    pub attributes: Attributes,
}

impl ArrayMeta {
    pub fn grid(&self) -> Result<ChunkGrid, ChunkStoreError> {
        ChunkGrid::new(self.shape.clone(), self.chunk_shape.clone())
    }

    pub fn validate(&self) -> Result<(), ChunkStoreError> {
        self.grid()?;
        self.codec.validate()?;
        if self.dimensions.len() != self.shape.len() {
            return Err(ChunkStoreError::RankMismatch(format!(
                "{} dimension names for rank {}",
                self.dimensions.len(),
                self.shape.len()
            )));
        }
        Ok(())
    }

    /// Same storage encoding (everything except shape and attributes).
    pub fn same_encoding(&self, other: &ArrayMeta) -> bool {
        self.chunk_shape == other.chunk_shape
            && self.dtype == other.dtype
            && self.fill_value == other.fill_value
            && self.codec == other.codec
            && self.dimensions == other.dimensions
    }
}

/// Stored chunk object reference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRef {
    pub id: ObjectId,
    pub len: u64,
    pub codec: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub meta: ArrayMeta,
    /// Chunk key (`i.j.k`) to object.
    pub chunks: BTreeMap<String, ChunkRef>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMeta {
    pub attributes: Attributes,
}

/// Complete description of one dataset version.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Root group attributes.
    #[serde(default)]
    pub attributes: Attributes,
    #[serde(default)]
    pub groups: BTreeMap<String, GroupMeta>,
    #[serde(default)]
    pub arrays: BTreeMap<String, ArrayEntry>,
}

impl Manifest {
    pub fn to_canonical_json(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ChunkStoreError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// Object id this manifest has when stored.
    pub fn id(&self) -> ObjectId {
        ObjectId::of(&self.to_canonical_json())
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty() && self.groups.is_empty() && self.arrays.is_empty()
    }

    pub fn chunk_count(&self) -> usize {
        self.arrays.values().map(|a| a.chunks.len()).sum()
    }

    /// Every object id referenced by a chunk.
    pub fn object_ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.arrays.values().flat_map(|a| a.chunks.values().map(|c| &c.id))
    }
}

/// UTF-8 JSON with sorted object keys and no insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("metadata documents are JSON-representable");
    serde_json::to_vec(&v).expect("serializing a JSON value cannot fail")
}
