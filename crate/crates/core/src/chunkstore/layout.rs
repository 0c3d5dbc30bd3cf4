//! Mapping between a [`RadarTree`] and chunked arrays.
//!
//! ```text
//! (root)                      site_id, site_latitude_deg, site_longitude_deg, site_altitude_m
//! <vcp>/                      vcp_name, n_sweeps
//! <vcp>/time                  int64 (time)            ns since the Unix epoch
//! <vcp>/sweep_k/              range_start_m, range_step_m, n_gates, elevation_deg
//! <vcp>/sweep_k/azimuth       float32 (azimuth)
//! <vcp>/sweep_k/range         float32 (range)
//! <vcp>/sweep_k/elevation     float32 (time)
//! <vcp>/sweep_k/ray_time      int64 (time, azimuth)
//! <vcp>/sweep_k/<MOMENT>      float32 (time, azimuth, range)
//! ```

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayViewD, Axis};
use serde::{Deserialize, Serialize};

use super::array::{read_full, write_array, Element, SnapshotReader, StagingArea};
use super::codec::CodecSpec;
use super::manifest::{ArrayMeta, AttrValue, Attributes, GroupMeta, Manifest};
use super::ChunkStoreError;
use crate::model::{sweep_name, validate_structure, MomentKind, RadarTree, Site, SweepGroup, TreePath, VcpGroup};
use crate::time::Timestamp;

type Result<T> = std::result::Result<T, ChunkStoreError>;

const TIME_UNITS: &str = "nanoseconds since 1970-01-01T00:00:00Z";

/// Chunk shapes and codec used when storing a tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkPolicy {
    /// Time steps per moment chunk.
    pub time: u64,
    /// Rays per moment chunk; `None` keeps whole sweeps.
    pub azimuth: Option<u64>,
    /// Gates per moment chunk; `None` keeps whole rays.
    pub range: Option<u64>,
    /// Chunk length of 1-d time-indexed coordinates.
    pub coordinate: u64,
    pub codec: CodecSpec,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy { time: 32, azimuth: None, range: None, coordinate: 4096, codec: CodecSpec::default() }
    }
}

impl ChunkPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.time == 0 || self.coordinate == 0 || self.azimuth == Some(0) || self.range == Some(0) {
            return Err(ChunkStoreError::InvalidArgument("chunk extents must be at least 1".into()));
        }
        Ok(self.codec.validate()?)
    }
}

fn tp(s: &str) -> Result<TreePath> {
    s.parse().map_err(|e| ChunkStoreError::InvalidArgument(format!("{e}")))
}

fn attrs<const N: usize>(items: [(&str, AttrValue); N]) -> Attributes {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

struct Writer<'a> {
    stage: &'a mut StagingArea,
    policy: &'a ChunkPolicy,
}

impl Writer<'_> {
    fn meta<T: Element>(&self, shape: &[usize], chunks: Vec<u64>, dims: &[&str], fill: T, attributes: Attributes) -> ArrayMeta {
        ArrayMeta {
            shape: shape.iter().map(|&n| n as u64).collect(),
            chunk_shape: chunks.into_iter().map(|c| c.max(1)).collect(),
            dtype: T::DTYPE,
            fill_value: fill.fill_bits(),
            codec: self.policy.codec.clone(),
            dimensions: dims.iter().map(|d| d.to_string()).collect(),
            attributes,
        }
    }

    /// Write `data` whole, or only the time chunks from `from` on when the
    /// stored array is compatible.
    fn put<T: Element>(&mut self, path: &str, meta: ArrayMeta, data: ArrayViewD<T>, from: usize) -> Result<()> {
        let tail_ok = self.stage.manifest().arrays.get(path).is_some_and(|e| {
            e.meta.same_encoding(&meta) && e.meta.shape.get(1..) == meta.shape.get(1..) && e.meta.attributes == meta.attributes
        });
        let start = if tail_ok { (from as u64 / meta.chunk_shape[0]) * meta.chunk_shape[0] } else { 0 };
        let mut offset = vec![0u64; meta.shape.len()];
        offset[0] = start;
        let view = data.slice_axis(Axis(0), ndarray::Slice::from(start as usize..));
        write_array(self.stage, &tp(path)?, meta, view, &offset)
    }

    fn group(&mut self, path: &str, attributes: Attributes) {
        self.stage.manifest_mut().groups.insert(path.to_string(), GroupMeta { attributes });
    }

    fn vcp(&mut self, g: &VcpGroup, from: usize) -> Result<()> {
        let p = self.policy;
        self.group(
            &g.name,
            attrs([("vcp_name", g.name.clone().into()), ("n_sweeps", (g.sweeps.len() as i64).into())]),
        );
        let times = Array1::from_iter(g.times.iter().map(|t| t.0));
        let meta = self.meta(&[times.len()], vec![p.coordinate], &["time"], Timestamp::NAT.0, attrs([("units", TIME_UNITS.into())]));
        self.put(&format!("{}/time", g.name), meta, times.view().into_dyn(), from)?;

        for (k, s) in g.sweeps.iter().enumerate() {
            let sp = format!("{}/{}", g.name, sweep_name(k));
            let (t, r, n) = (s.n_times(), s.n_rays(), s.n_gates());
            self.group(
                &sp,
                attrs([
                    ("range_start_m", (s.range_start_m as f64).into()),
                    ("range_step_m", (s.range_step_m as f64).into()),
                    ("n_gates", (n as i64).into()),
                    ("elevation_deg", (s.elevation_deg.first().copied().unwrap_or(f32::NAN) as f64).into()),
                ]),
            );
            let deg = || attrs([("units", "degrees".into())]);
            let az = Array1::from_vec(s.azimuth_deg.clone());
            let meta = self.meta(&[r], vec![r as u64], &["azimuth"], f32::NAN, deg());
            self.put(&format!("{sp}/azimuth"), meta, az.view().into_dyn(), 0)?;
            let rg = Array1::from_vec(s.range_m.clone());
            let meta = self.meta(&[n], vec![n as u64], &["range"], f32::NAN, attrs([("units", "meters".into())]));
            self.put(&format!("{sp}/range"), meta, rg.view().into_dyn(), 0)?;
            let el = Array1::from_vec(s.elevation_deg.clone());
            let meta = self.meta(&[t], vec![p.coordinate], &["time"], f32::NAN, deg());
            self.put(&format!("{sp}/elevation"), meta, el.view().into_dyn(), from)?;
            let meta = self.meta(
                &[t, r],
                vec![p.time, r as u64],
                &["time", "azimuth"],
                Timestamp::NAT.0,
                attrs([("units", TIME_UNITS.into())]),
            );
            self.put(&format!("{sp}/ray_time"), meta, s.ray_times.view().into_dyn(), from)?;

            let chunks = vec![p.time, p.azimuth.unwrap_or(r as u64).min(r as u64), p.range.unwrap_or(n as u64).min(n as u64)];
            for (kind, data) in &s.moments {
                let meta = self.meta(
                    &[t, r, n],
                    chunks.clone(),
                    &["time", "azimuth", "range"],
                    f32::NAN,
                    attrs([("units", kind.units().into()), ("long_name", kind.long_name().into())]),
                );
                self.put(&format!("{sp}/{}", kind.code()), meta, data.view().into_dyn(), from)?;
            }
        }
        Ok(())
    }
}

fn site_attrs(site: &Site) -> Attributes {
    attrs([
        ("site_id", site.id.clone().into()),
        ("site_latitude_deg", site.latitude_deg.into()),
        ("site_longitude_deg", site.longitude_deg.into()),
        ("site_altitude_m", (site.altitude_m as f64).into()),
    ])
}

/// Replace the staged content with `tree`.
pub fn store_tree(stage: &mut StagingArea, tree: &RadarTree, policy: &ChunkPolicy) -> Result<()> {
    if tree.is_empty() {
        return Err(ChunkStoreError::InvalidArgument("cannot store an empty tree".into()));
    }
    let m = stage.manifest_mut();
    m.groups.clear();
    m.attributes.clear();
    let keep: Vec<String> = tree.groups.keys().cloned().collect();
    m.arrays.retain(|k, _| keep.iter().any(|g| k.starts_with(&format!("{g}/"))));
    let from = tree.groups.keys().map(|k| (k.clone(), 0)).collect();
    store_tree_incremental(stage, tree, policy, &from)
}

/// Store `tree` over a staged copy of an earlier version of itself.
///
/// `changed_from` maps each group whose times changed to the first time index
/// that differs from the staged version; only time chunks from there on are
/// rewritten. Groups absent from the map that already exist are left as is.
pub fn store_tree_incremental(
    stage: &mut StagingArea,
    tree: &RadarTree,
    policy: &ChunkPolicy,
    changed_from: &BTreeMap<String, usize>,
) -> Result<()> {
    policy.validate()?;
    let violations = validate_structure(tree);
    if let Some(v) = violations.first() {
        return Err(ChunkStoreError::InvalidArgument(format!("tree is not valid: {v}")));
    }
    if let Some(site) = &tree.site {
        stage.manifest_mut().attributes = site_attrs(site);
    }
    let mut w = Writer { stage, policy };
    for (name, g) in &tree.groups {
        let from = match changed_from.get(name) {
            Some(&f) => f,
            None if w.stage.manifest().groups.contains_key(name) => continue,
            None => 0,
        };
        w.vcp(g, from)?;
    }
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> ChunkStoreError {
    ChunkStoreError::CorruptLayout(msg.into())
}

fn attr<'a>(a: &'a Attributes, key: &str, owner: &str) -> Result<&'a AttrValue> {
    a.get(key).ok_or_else(|| corrupt(format!("{owner:?} lacks attribute {key}")))
}

fn attr_f64(a: &Attributes, key: &str, owner: &str) -> Result<f64> {
    attr(a, key, owner)?.as_f64().ok_or_else(|| corrupt(format!("{owner:?} attribute {key} is not numeric")))
}

fn read_arr<T: Element>(r: &SnapshotReader, path: &str) -> Result<ArrayD<T>> {
    if !r.manifest().arrays.contains_key(path) {
        return Err(corrupt(format!("missing array {path}")));
    }
    Ok(read_full::<T>(r, &tp(path)?)?.0)
}

fn dims<T, D: ndarray::Dimension>(a: ArrayD<T>, path: &str) -> Result<ndarray::Array<T, D>> {
    a.into_dimensionality::<D>().map_err(|_| corrupt(format!("{path} has the wrong rank")))
}

/// Site recorded in the root attributes.
pub fn read_site(m: &Manifest) -> Result<Site> {
    let a = &m.attributes;
    Ok(Site {
        id: attr(a, "site_id", "/")?.as_str().ok_or_else(|| corrupt("site_id is not text"))?.to_string(),
        latitude_deg: attr_f64(a, "site_latitude_deg", "/")?,
        longitude_deg: attr_f64(a, "site_longitude_deg", "/")?,
        altitude_m: attr_f64(a, "site_altitude_m", "/")? as f32,
    })
}

/// Materialize the tree stored in a snapshot.
pub fn load_tree(reader: &SnapshotReader) -> Result<RadarTree> {
    load_tree_where(reader, |_| true)
}

/// [`load_tree`] restricted to the VCP groups accepted by `keep`.
pub fn load_tree_where(reader: &SnapshotReader, keep: impl Fn(&str) -> bool) -> Result<RadarTree> {
    let m = reader.manifest().clone();
    let mut tree = RadarTree::default();
    if m.groups.is_empty() && m.arrays.is_empty() {
        return Ok(tree);
    }
    tree.site = Some(read_site(&m)?);

    for (name, gm) in m.groups.iter().filter(|(k, _)| !k.contains('/') && keep(k)) {
        let n_sweeps = attr(&gm.attributes, "n_sweeps", name)?
            .as_i64()
            .filter(|n| *n >= 0)
            .ok_or_else(|| corrupt(format!("{name:?} n_sweeps is not a count")))?;
        let time_path = format!("{name}/time");
        let times: Array1<i64> = dims(read_arr(reader, &time_path)?, &time_path)?;
        let n_t = times.len();
        let mut sweeps = Vec::with_capacity(n_sweeps as usize);
        for k in 0..n_sweeps as usize {
            let sp = format!("{name}/{}", sweep_name(k));
            let sg = m.groups.get(&sp).ok_or_else(|| corrupt(format!("missing group {sp}")))?;
            let azimuth: Array1<f32> = dims(read_arr(reader, &format!("{sp}/azimuth"))?, &sp)?;
            let range: Array1<f32> = dims(read_arr(reader, &format!("{sp}/range"))?, &sp)?;
            let elevation: Array1<f32> = dims(read_arr(reader, &format!("{sp}/elevation"))?, &sp)?;
            let ray_times: Array2<i64> = dims(read_arr(reader, &format!("{sp}/ray_time"))?, &sp)?;
            let (n_r, n_g) = (azimuth.len(), range.len());
            if elevation.len() != n_t {
                return Err(corrupt(format!("{sp}/elevation has length {} but time has {n_t}", elevation.len())));
            }
            if ray_times.dim() != (n_t, n_r) {
                return Err(corrupt(format!("{sp}/ray_time has shape {:?}, expected ({n_t}, {n_r})", ray_times.dim())));
            }
            let mut moments = BTreeMap::new();
            let prefix = format!("{sp}/");
            for key in m.arrays.keys().filter(|k| k.starts_with(&prefix)) {
                let Some(kind) = MomentKind::from_code(&key[prefix.len()..]) else { continue };
                let data: Array3<f32> = dims(read_arr(reader, key)?, key)?;
                if data.dim() != (n_t, n_r, n_g) {
                    return Err(corrupt(format!("{key} has shape {:?}, expected ({n_t}, {n_r}, {n_g})", data.dim())));
                }
                moments.insert(kind, data);
            }
            sweeps.push(SweepGroup {
                azimuth_deg: azimuth.to_vec(),
                range_start_m: attr_f64(&sg.attributes, "range_start_m", &sp)? as f32,
                range_step_m: attr_f64(&sg.attributes, "range_step_m", &sp)? as f32,
                range_m: range.to_vec(),
                elevation_deg: elevation.to_vec(),
                ray_times,
                moments,
            });
        }
        tree.groups.insert(
            name.clone(),
            VcpGroup { name: name.clone(), times: times.iter().map(|&t| Timestamp(t)).collect(), sweeps },
        );
    }
    if let Some(v) = validate_structure(&tree).first() {
        return Err(corrupt(v.to_string()));
    }
    Ok(tree)
}

/// Stored path of one moment array.
pub fn moment_path(vcp: &str, sweep: usize, kind: MomentKind) -> String {
    format!("{vcp}/{}/{}", sweep_name(sweep), kind.code())
}
