use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Conflict, ConflictKind, ConflictReport, TxnError};
use crate::chunkstore::{
    read_full, ArrayEntry, ArrayMeta, Attributes, ChunkRef, ChunkStoreError, GroupMeta, Manifest, ObjectId, ObjectStore,
    SnapshotReader,
};
use crate::time::Timestamp;

/// Closed time interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeInterval {
    pub fn intersects(&self, o: &TimeInterval) -> bool {
        self.start <= o.end && o.start <= self.end
    }
}

/// Changes between a base manifest and a staged one. `None` means deleted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Delta {
    /// Id of the manifest the delta applies to.
    pub base: ObjectId,
    pub chunks: BTreeMap<(String, String), Option<ChunkRef>>,
    pub arrays: BTreeMap<String, Option<ArrayMeta>>,
    pub groups: BTreeMap<String, Option<GroupMeta>>,
    pub root_attributes: Option<Attributes>,
    /// Per VCP group, the span of time coordinates the change adds.
    pub appended: BTreeMap<String, TimeInterval>,
}

impl Delta {
    pub fn between(base: &Manifest, new: &Manifest) -> Delta {
        let mut d = Delta { base: base.id(), ..Default::default() };
        let empty = BTreeMap::new();
        let paths: std::collections::BTreeSet<&String> = base.arrays.keys().chain(new.arrays.keys()).collect();
        for path in paths {
            let (a, b) = (base.arrays.get(path), new.arrays.get(path));
            let meta_a = a.map(|e| &e.meta);
            let meta_b = b.map(|e| &e.meta);
            if meta_a != meta_b {
                d.arrays.insert(path.clone(), meta_b.cloned());
            }
            let ca = a.map_or(&empty, |e| &e.chunks);
            let cb = b.map_or(&empty, |e| &e.chunks);
            for key in ca.keys().chain(cb.keys()) {
                let (x, y) = (ca.get(key), cb.get(key));
                if x != y {
                    d.chunks.insert((path.clone(), key.clone()), y.cloned());
                }
            }
        }
        for path in base.groups.keys().chain(new.groups.keys()) {
            let (a, b) = (base.groups.get(path), new.groups.get(path));
            if a != b {
                d.groups.insert(path.clone(), b.cloned());
            }
        }
        if base.attributes != new.attributes {
            d.root_attributes = Some(new.attributes.clone());
        }
        d
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty() && self.arrays.is_empty() && self.groups.is_empty() && self.root_attributes.is_none()
    }

    /// Apply onto `target` (normally a manifest descending from the base).
    pub fn apply(&self, target: &Manifest) -> Manifest {
        let mut m = target.clone();
        for (path, meta) in &self.arrays {
            match meta {
                Some(meta) => {
                    m.arrays
                        .entry(path.clone())
                        .and_modify(|e| e.meta = meta.clone())
                        .or_insert_with(|| ArrayEntry { meta: meta.clone(), chunks: BTreeMap::new() });
                }
                None => {
                    m.arrays.remove(path);
                }
            }
        }
        for ((path, key), r) in &self.chunks {
            let Some(entry) = m.arrays.get_mut(path) else { continue };
            match r {
                Some(r) => {
                    entry.chunks.insert(key.clone(), r.clone());
                }
                None => {
                    entry.chunks.remove(key);
                }
            }
        }
        for (path, g) in &self.groups {
            match g {
                Some(g) => {
                    m.groups.insert(path.clone(), g.clone());
                }
                None => {
                    m.groups.remove(path);
                }
            }
        }
        if let Some(a) = &self.root_attributes {
            m.attributes = a.clone();
        }
        m
    }
}

fn read_times(reader: &SnapshotReader, path: &str) -> Result<Vec<i64>, ChunkStoreError> {
    let tp = path.parse().map_err(|e| ChunkStoreError::InvalidArgument(format!("{e}")))?;
    Ok(read_full::<i64>(reader, &tp)?.0.iter().copied().collect())
}

/// Span of time coordinates present in `new` but not in `base`, per VCP group.
pub fn appended_times(
    store: &Arc<dyn ObjectStore>,
    base: &Arc<Manifest>,
    new: &Arc<Manifest>,
) -> Result<BTreeMap<String, TimeInterval>, ChunkStoreError> {
    let old_r = SnapshotReader::new(base.clone(), store.clone());
    let new_r = SnapshotReader::new(new.clone(), store.clone());
    let mut out = BTreeMap::new();
    for (path, entry) in &new.arrays {
        let Some(group) = path.strip_suffix("/time").filter(|g| !g.contains('/')) else { continue };
        if base.arrays.get(path) == Some(entry) {
            continue;
        }
        let mut old = match base.arrays.contains_key(path) {
            true => read_times(&old_r, path)?,
            false => Vec::new(),
        };
        old.sort_unstable();
        let added: Vec<i64> = read_times(&new_r, path)?.into_iter().filter(|t| old.binary_search(t).is_err()).collect();
        if let (Some(lo), Some(hi)) = (added.iter().min(), added.iter().max()) {
            out.insert(group.to_string(), TimeInterval { start: Timestamp(*lo), end: Timestamp(*hi) });
        }
    }
    Ok(out)
}

/// Conflicts between two deltas made against the same base manifest.
pub fn detect_conflict(base: &Manifest, a: &Delta, b: &Delta) -> Result<ConflictReport, TxnError> {
    let id = base.id();
    if a.base != id || b.base != id {
        return Err(TxnError::InvalidArgument("deltas are not based on the given manifest".into()));
    }
    let mut conflicts = Vec::new();
    for (path, key) in a.chunks.keys().filter(|k| b.chunks.contains_key(*k)) {
        conflicts.push(Conflict {
            path: path.clone(),
            kind: ConflictKind::ChunkOverlap,
            detail: format!("both changes write chunk {key}"),
        });
    }
    let mut diverge = |path: &str, what: &str| {
        conflicts.push(Conflict {
            path: path.to_string(),
            kind: ConflictKind::MetadataDivergence,
            detail: format!("both changes rewrite the {what} metadata differently"),
        })
    };
    for (path, m) in &a.arrays {
        if b.arrays.get(path).is_some_and(|n| n != m) {
            diverge(path, "array");
        }
    }
    for (path, g) in &a.groups {
        if b.groups.get(path).is_some_and(|n| n != g) {
            diverge(path, "group");
        }
    }
    if let (Some(x), Some(y)) = (&a.root_attributes, &b.root_attributes) {
        if x != y {
            diverge("/", "root");
        }
    }
    for (group, x) in &a.appended {
        if let Some(y) = b.appended.get(group).filter(|y| x.intersects(y)) {
            conflicts.push(Conflict {
                path: group.clone(),
                kind: ConflictKind::TimeRangeOverlap,
                detail: format!(
                    "appended times [{}, {}] and [{}, {}] intersect",
                    x.start.to_rfc3339(),
                    x.end.to_rfc3339(),
                    y.start.to_rfc3339(),
                    y.end.to_rfc3339()
                ),
            });
        }
    }
    Ok(ConflictReport { conflicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunkstore::{CodecSpec, DType};

    fn chunk(tag: &[u8]) -> ChunkRef {
        ChunkRef { id: ObjectId::of(tag), len: 1, codec: "raw".into() }
    }

    fn base() -> Manifest {
        let mut m = Manifest::default();
        let meta = ArrayMeta {
            shape: vec![64, 2, 2],
            chunk_shape: vec![32, 2, 2],
            dtype: DType::Float32,
            fill_value: 0,
            codec: CodecSpec::raw(),
            dimensions: vec!["time".into(), "azimuth".into(), "range".into()],
            attributes: Default::default(),
        };
        for p in ["VCP-212/sweep_0/DBZH", "VCP-212/sweep_1/DBZH"] {
            m.arrays.insert(
                p.into(),
                ArrayEntry { meta: meta.clone(), chunks: BTreeMap::from([("0.0.0".into(), chunk(b"a")), ("1.0.0".into(), chunk(b"b"))]) },
            );
        }
        m
    }

    fn edit(m: &Manifest, path: &str, key: &str, tag: &[u8]) -> Manifest {
        let mut m = m.clone();
        m.arrays.get_mut(path).unwrap().chunks.insert(key.into(), chunk(tag));
        m
    }

    #[test]
    fn disjoint_changes_do_not_conflict_and_compose() {
        let b = base();
        let ma = edit(&b, "VCP-212/sweep_0/DBZH", "1.0.0", b"x");
        let mb = edit(&b, "VCP-212/sweep_1/DBZH", "0.0.0", b"y");
        let (da, db) = (Delta::between(&b, &ma), Delta::between(&b, &mb));
        assert!(detect_conflict(&b, &da, &db).unwrap().is_empty());
        let merged = db.apply(&da.apply(&b));
        assert_eq!(merged.arrays["VCP-212/sweep_0/DBZH"].chunks["1.0.0"], chunk(b"x"));
        assert_eq!(merged.arrays["VCP-212/sweep_1/DBZH"].chunks["0.0.0"], chunk(b"y"));
        assert_eq!(merged, da.apply(&db.apply(&b)));
    }

    #[test]
    fn same_chunk_is_an_overlap() {
        let b = base();
        let da = Delta::between(&b, &edit(&b, "VCP-212/sweep_0/DBZH", "3.0.0", b"x"));
        let db = Delta::between(&b, &edit(&b, "VCP-212/sweep_0/DBZH", "3.0.0", b"y"));
        let r = detect_conflict(&b, &da, &db).unwrap();
        assert_eq!(r.conflicts.len(), 1);
        assert_eq!(r.conflicts[0].kind, ConflictKind::ChunkOverlap);
        assert_eq!(r.conflicts[0].path, "VCP-212/sweep_0/DBZH");
    }

    #[test]
    fn metadata_divergence() {
        let b = base();
        let mut ma = b.clone();
        ma.arrays.get_mut("VCP-212/sweep_0/DBZH").unwrap().meta.shape[0] = 70;
        let mut mb = b.clone();
        mb.arrays.get_mut("VCP-212/sweep_0/DBZH").unwrap().meta.shape[0] = 80;
        let r = detect_conflict(&b, &Delta::between(&b, &ma), &Delta::between(&b, &mb)).unwrap();
        assert!(r.has(ConflictKind::MetadataDivergence));
        let r = detect_conflict(&b, &Delta::between(&b, &ma), &Delta::between(&b, &ma)).unwrap();
        assert!(!r.has(ConflictKind::MetadataDivergence));
    }

    #[test]
    fn overlapping_appends() {
        let b = base();
        let iv = |a: i64, z: i64| TimeInterval { start: Timestamp::from_seconds(a), end: Timestamp::from_seconds(z) };
        let mut da = Delta::between(&b, &b);
        let mut db = da.clone();
        da.appended.insert("VCP-212".into(), iv(1, 5));
        db.appended.insert("VCP-212".into(), iv(4, 8));
        let r = detect_conflict(&b, &da, &db).unwrap();
        assert_eq!(r.conflicts.len(), 1);
        assert_eq!((r.conflicts[0].kind, r.conflicts[0].path.as_str()), (ConflictKind::TimeRangeOverlap, "VCP-212"));
        db.appended.insert("VCP-212".into(), iv(6, 8));
        assert!(detect_conflict(&b, &da, &db).unwrap().is_empty());
    }

    #[test]
    fn mismatched_bases_rejected() {
        let b = base();
        let other = edit(&b, "VCP-212/sweep_0/DBZH", "0.0.0", b"z");
        let da = Delta::between(&b, &other);
        let db = Delta::between(&other, &b);
        assert!(matches!(detect_conflict(&b, &da, &db), Err(TxnError::InvalidArgument(_))));
    }

    #[test]
    fn deletions_roundtrip() {
        let b = base();
        let mut m = b.clone();
        m.arrays.remove("VCP-212/sweep_1/DBZH");
        m.groups.insert("VCP-212".into(), GroupMeta::default());
        let d = Delta::between(&b, &m);
        assert_eq!(d.apply(&b), m);
        assert!(Delta::between(&b, &b).is_empty());
    }
}
