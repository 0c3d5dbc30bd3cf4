use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::ChunkStoreError;
use crate::persist::Persist;

/// SHA-256 of an object's stored bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ObjectId(pub [u8; 32]);

impl ObjectId {
    pub const ZERO: ObjectId = ObjectId([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        ObjectId(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ObjectId({})", &self.to_hex()[..12])
    }
}

impl FromStr for ObjectId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = [0u8; 32];
        if s.len() != 64 {
            return Err(format!("expected 64 hex characters, got {}", s.len()));
        }
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(ObjectId(out))
    }
}

impl Serialize for ObjectId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ObjectId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Content-addressed blob storage. `put` is idempotent.
pub trait ObjectStore: Send + Sync + fmt::Debug {
    fn put(&self, bytes: &[u8]) -> Result<ObjectId, ChunkStoreError>;
    fn get(&self, id: &ObjectId) -> Result<Vec<u8>, ChunkStoreError>;
    fn contains(&self, id: &ObjectId) -> bool;
}

#[derive(Debug, Default)]
pub struct MemObjectStore {
    objects: RwLock<HashMap<ObjectId, Vec<u8>>>,
}

impl MemObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_bytes(&self) -> usize {
        self.objects.read().unwrap().values().map(Vec::len).sum()
    }
}

impl ObjectStore for MemObjectStore {
    fn put(&self, bytes: &[u8]) -> Result<ObjectId, ChunkStoreError> {
        let id = ObjectId::of(bytes);
        self.objects.write().unwrap().entry(id).or_insert_with(|| bytes.to_vec());
        Ok(id)
    }

    fn get(&self, id: &ObjectId) -> Result<Vec<u8>, ChunkStoreError> {
        self.objects.read().unwrap().get(id).cloned().ok_or(ChunkStoreError::MissingObject(*id))
    }

    fn contains(&self, id: &ObjectId) -> bool {
        self.objects.read().unwrap().contains_key(id)
    }
}

/// Objects as files: `<root>/objects/<first 2 hex>/<64 hex>`.
#[derive(Debug)]
pub struct FsObjectStore {
    dir: PathBuf,
    persist: Persist,
}

impl FsObjectStore {
    pub fn new(repo_root: &Path, persist: Persist) -> std::io::Result<Self> {
        let dir = repo_root.join("objects");
        std::fs::create_dir_all(&dir)?;
        Ok(FsObjectStore { dir, persist })
    }

    pub fn object_path(&self, id: &ObjectId) -> PathBuf {
        let hex = id.to_hex();
        self.dir.join(&hex[..2]).join(hex)
    }
}

impl ObjectStore for FsObjectStore {
    fn put(&self, bytes: &[u8]) -> Result<ObjectId, ChunkStoreError> {
        let id = ObjectId::of(bytes);
        let path = self.object_path(&id);
        if !path.exists() {
            std::fs::create_dir_all(path.parent().expect("object paths have a shard dir"))?;
            self.persist.write_if_absent(&path, bytes, "object")?;
        }
        Ok(id)
    }

    fn get(&self, id: &ObjectId) -> Result<Vec<u8>, ChunkStoreError> {
        match std::fs::read(self.object_path(id)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ChunkStoreError::MissingObject(*id)),
            Err(e) => Err(e.into()),
        }
    }

    fn contains(&self, id: &ObjectId) -> bool {
        self.object_path(id).is_file()
    }
}
