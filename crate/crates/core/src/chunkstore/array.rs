use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{ArrayD, ArrayViewD, IxDyn, Slice};

use super::codec::{compress, decompress};
use super::grid::{ChunkGrid, ChunkKey};
use super::manifest::{ArrayEntry, ArrayMeta, ChunkRef, DType, Manifest};
use super::object::ObjectStore;
use super::ChunkStoreError;
use crate::model::TreePath;
use crate::par;

type Result<T> = std::result::Result<T, ChunkStoreError>;

/// Element types that can be stored in a chunked array.
pub trait Element: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    const DTYPE: DType;
    fn to_le(self, out: &mut Vec<u8>);
    fn from_le(bytes: &[u8]) -> Self;
    fn from_fill_bits(bits: u64) -> Self;
    fn fill_bits(self) -> u64;
}

impl Element for f32 {
    const DTYPE: DType = DType::Float32;
    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le(b: &[u8]) -> Self {
        f32::from_le_bytes(b.try_into().unwrap())
    }
    fn from_fill_bits(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }
    fn fill_bits(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::Float64;
    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le(b: &[u8]) -> Self {
        f64::from_le_bytes(b.try_into().unwrap())
    }
    fn from_fill_bits(bits: u64) -> Self {
        f64::from_bits(bits)
    }
    fn fill_bits(self) -> u64 {
        self.to_bits()
    }
}

impl Element for i64 {
    const DTYPE: DType = DType::Int64;
    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le(b: &[u8]) -> Self {
        i64::from_le_bytes(b.try_into().unwrap())
    }
    fn from_fill_bits(bits: u64) -> Self {
        bits as i64
    }
    fn fill_bits(self) -> u64 {
        self as u64
    }
}

/// Chunk payload: rank (u8), extents (u32 each), then elements in row-major order.
fn encode_chunk<T: Element>(data: &ArrayViewD<T>) -> Vec<u8> {
    let size = T::DTYPE.size();
    let mut out = Vec::with_capacity(1 + 4 * data.ndim() + size * data.len());
    out.push(data.ndim() as u8);
    for &e in data.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    match data.as_slice() {
        Some(s) => s.iter().for_each(|v| v.to_le(&mut out)),
        None => data.iter().for_each(|v| v.to_le(&mut out)),
    }
    out
}

fn decode_chunk<T: Element>(bytes: &[u8], rank: usize, max_extent: &[u64]) -> std::result::Result<ArrayD<T>, String> {
    let head = 1 + 4 * rank;
    if bytes.len() < head || bytes[0] as usize != rank {
        return Err(format!("chunk header does not describe a rank-{rank} chunk"));
    }
    let extent: Vec<usize> =
        (0..rank).map(|d| u32::from_le_bytes(bytes[1 + 4 * d..5 + 4 * d].try_into().unwrap()) as usize).collect();
    if extent.iter().zip(max_extent).any(|(&e, &m)| e as u64 > m) {
        return Err(format!("chunk extent {extent:?} exceeds chunk shape {max_extent:?}"));
    }
    let n: usize = extent.iter().product();
    let size = T::DTYPE.size();
    let body = &bytes[head..];
    if body.len() != n * size {
        return Err(format!("chunk body is {} bytes, expected {}", body.len(), n * size));
    }
    let values: Vec<T> = body.chunks_exact(size).map(T::from_le).collect();
    Ok(ArrayD::from_shape_vec(IxDyn(&extent), values).expect("length checked"))
}

fn check_dtype<T: Element>(path: &str, meta: &ArrayMeta) -> Result<()> {
    if meta.dtype != T::DTYPE {
        return Err(ChunkStoreError::TypeMismatch { path: path.into(), expected: meta.dtype, found: T::DTYPE });
    }
    Ok(())
}

fn slice_of(r: &[Range<u64>], origin: &[u64]) -> Vec<Slice> {
    r.iter()
        .zip(origin)
        .map(|(r, o)| Slice::from(((r.start - o) as usize)..((r.end - o) as usize)))
        .collect()
}

fn intersect(a: &[Range<u64>], b: &[Range<u64>]) -> Vec<Range<u64>> {
    a.iter().zip(b).map(|(a, b)| a.start.max(b.start)..a.end.min(b.end).max(a.start.max(b.start))).collect()
}

/// Copy `region` (global coordinates) from `src` (whose origin is `src_origin`)
/// into `dst` (whose origin is `dst_origin`).
fn copy_region<T: Element>(
    dst: &mut ArrayD<T>,
    dst_origin: &[u64],
    src: &ArrayViewD<T>,
    src_origin: &[u64],
    region: &[Range<u64>],
) {
    if region.iter().any(|r| r.is_empty()) {
        return;
    }
    let ds = slice_of(region, dst_origin);
    let ss = slice_of(region, src_origin);
    dst.slice_each_axis_mut(|ax| ds[ax.axis.index()])
        .assign(&src.slice_each_axis(|ax| ss[ax.axis.index()]));
}

fn fetch_chunk<T: Element>(
    store: &dyn ObjectStore,
    meta: &ArrayMeta,
    r: &ChunkRef,
) -> Result<(ArrayD<T>, u64)> {
    let frame = store.get(&r.id)?;
    let n = frame.len() as u64;
    let bytes = decompress(&r.codec, &frame)?;
    let data = decode_chunk(&bytes, meta.shape.len(), &meta.chunk_shape)
        .map_err(|detail| ChunkStoreError::CorruptObject { id: r.id, detail })?;
    Ok((data, n))
}

/// Mutable manifest plus the store its chunks are written to.
#[derive(Debug)]
pub struct StagingArea {
    store: Arc<dyn ObjectStore>,
    manifest: Manifest,
    chunks_written: u64,
    bytes_written: u64,
}

impl StagingArea {
    pub fn new(store: Arc<dyn ObjectStore>, base: Manifest) -> Self {
        StagingArea { store, manifest: base, chunks_written: 0, bytes_written: 0 }
    }

    pub fn store(&self) -> &Arc<dyn ObjectStore> {
        &self.store
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Direct access for metadata edits (group attributes, removals).
    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn into_manifest(self) -> Manifest {
        self.manifest
    }

    /// Chunk objects and compressed bytes written so far.
    pub fn written(&self) -> (u64, u64) {
        (self.chunks_written, self.bytes_written)
    }

    /// Reader over the current staged state.
    pub fn reader(&self) -> SnapshotReader {
        SnapshotReader::new(Arc::new(self.manifest.clone()), self.store.clone())
    }
}

/// Write `data` at `offset` into the array at `path`, creating or reshaping it
/// to `meta`. Chunks the region does not touch keep their objects.
pub fn write_array<T: Element>(
    stage: &mut StagingArea,
    path: &TreePath,
    meta: ArrayMeta,
    data: ArrayViewD<T>,
    offset: &[u64],
) -> Result<()> {
    let key = path.to_string();
    meta.validate()?;
    check_dtype::<T>(&key, &meta)?;
    let grid = meta.grid()?;
    if data.ndim() != grid.rank() || offset.len() != grid.rank() {
        return Err(ChunkStoreError::RankMismatch(format!(
            "data rank {}, offset rank {}, array rank {}",
            data.ndim(),
            offset.len(),
            grid.rank()
        )));
    }
    let region: Vec<Range<u64>> = offset.iter().zip(data.shape()).map(|(o, &n)| *o..o + n as u64).collect();
    grid.check_region(&region)?;

    let mut prior = match stage.manifest.arrays.remove(&key) {
        Some(e) if e.meta.same_encoding(&meta) => e.chunks,
        _ => Default::default(),
    };
    let grid_shape = grid.grid_shape();
    prior.retain(|k, _| ChunkKey::decode(k).is_some_and(|ix| ix.iter().zip(&grid_shape).all(|(i, n)| i < n)));

    let fill = T::from_fill_bits(meta.fill_value);
    let targets = grid.chunks_intersecting(&region);
    let store = stage.store.as_ref();
    let written = par::try_map(&targets, |ix| -> Result<(String, ChunkRef)> {
        let bounds = grid.chunk_bounds(ix);
        let origin: Vec<u64> = bounds.iter().map(|r| r.start).collect();
        let covered = intersect(&bounds, &region);
        let chunk = if covered == bounds {
            data.slice_each_axis(|ax| slice_of(&bounds, offset)[ax.axis.index()]).to_owned()
        } else {
            let extent: Vec<usize> = bounds.iter().map(|r| (r.end - r.start) as usize).collect();
            let mut chunk = ArrayD::from_elem(IxDyn(&extent), fill);
            if let Some(r) = prior.get(&ChunkKey::encode(ix)) {
                let (old, _) = fetch_chunk::<T>(store, &meta, r)?;
                let old_bounds: Vec<Range<u64>> =
                    origin.iter().zip(old.shape()).map(|(o, &n)| *o..o + n as u64).collect();
                copy_region(&mut chunk, &origin, &old.view(), &origin, &intersect(&bounds, &old_bounds));
            }
            copy_region(&mut chunk, &origin, &data, offset, &covered);
            chunk
        };
        let frame = compress(&meta.codec, &encode_chunk(&chunk.view()))?;
        let id = store.put(&frame)?;
        Ok((ChunkKey::encode(ix), ChunkRef { id, len: frame.len() as u64, codec: meta.codec.id.clone() }))
    })?;

    for (k, r) in written {
        stage.chunks_written += 1;
        stage.bytes_written += r.len;
        prior.insert(k, r);
    }
    stage.manifest.arrays.insert(key, ArrayEntry { meta, chunks: prior });
    Ok(())
}

/// Chunk objects fetched while serving reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AccessTrace {
    pub chunks_fetched: u64,
    pub bytes_fetched: u64,
}

impl std::ops::AddAssign for AccessTrace {
    fn add_assign(&mut self, o: AccessTrace) {
        self.chunks_fetched += o.chunks_fetched;
        self.bytes_fetched += o.bytes_fetched;
    }
}

/// Read access to one immutable manifest. Cheap to clone handles via `Arc`.
#[derive(Debug)]
pub struct SnapshotReader {
    manifest: Arc<Manifest>,
    store: Arc<dyn ObjectStore>,
    chunks: AtomicU64,
    bytes: AtomicU64,
}

impl SnapshotReader {
    pub fn new(manifest: Arc<Manifest>, store: Arc<dyn ObjectStore>) -> Self {
        SnapshotReader { manifest, store, chunks: AtomicU64::new(0), bytes: AtomicU64::new(0) }
    }

    pub fn manifest(&self) -> &Arc<Manifest> {
        &self.manifest
    }

    pub fn store(&self) -> &Arc<dyn ObjectStore> {
        &self.store
    }

    pub fn array_meta(&self, path: &str) -> Result<&ArrayMeta> {
        self.manifest.arrays.get(path).map(|e| &e.meta).ok_or_else(|| ChunkStoreError::UnknownPath(path.into()))
    }

    /// Cumulative trace over every read through this reader.
    pub fn total_trace(&self) -> AccessTrace {
        AccessTrace { chunks_fetched: self.chunks.load(Ordering::Relaxed), bytes_fetched: self.bytes.load(Ordering::Relaxed) }
    }
}

/// Read `region` of the array at `path`. Only chunks intersecting the region
/// are fetched, each once; never-written chunks are served as fill.
pub fn read_region<T: Element>(
    reader: &SnapshotReader,
    path: &TreePath,
    region: &[Range<u64>],
) -> Result<(ArrayD<T>, AccessTrace)> {
    let key = path.to_string();
    let entry = reader.manifest.arrays.get(&key).ok_or_else(|| ChunkStoreError::UnknownPath(key.clone()))?;
    let meta = &entry.meta;
    check_dtype::<T>(&key, meta)?;
    let grid: ChunkGrid = meta.grid()?;
    grid.check_region(region)?;

    let origin: Vec<u64> = region.iter().map(|r| r.start).collect();
    let extent: Vec<usize> = region.iter().map(|r| (r.end - r.start) as usize).collect();
    let mut out = ArrayD::from_elem(IxDyn(&extent), T::from_fill_bits(meta.fill_value));

    let present: Vec<(Vec<u64>, &ChunkRef)> = grid
        .chunks_intersecting(region)
        .into_iter()
        .filter_map(|ix| entry.chunks.get(&ChunkKey::encode(&ix)).map(|r| (ix, r)))
        .collect();
    let store = reader.store.as_ref();
    let fetched = par::try_map(&present, |(_, r)| fetch_chunk::<T>(store, meta, r))?;

    let mut trace = AccessTrace::default();
    for ((ix, _), (chunk, n)) in present.iter().zip(fetched) {
        trace.chunks_fetched += 1;
        trace.bytes_fetched += n;
        let bounds = grid.chunk_bounds(ix);
        let corigin: Vec<u64> = bounds.iter().map(|r| r.start).collect();
        let stored: Vec<Range<u64>> = corigin.iter().zip(chunk.shape()).map(|(o, &n)| *o..o + n as u64).collect();
        let r = intersect(&intersect(&bounds, &stored), region);
        copy_region(&mut out, &origin, &chunk.view(), &corigin, &r);
    }
    reader.chunks.fetch_add(trace.chunks_fetched, Ordering::Relaxed);
    reader.bytes.fetch_add(trace.bytes_fetched, Ordering::Relaxed);
    Ok((out, trace))
}

/// [`read_region`] over the whole array.
pub fn read_full<T: Element>(reader: &SnapshotReader, path: &TreePath) -> Result<(ArrayD<T>, AccessTrace)> {
    let shape = reader.array_meta(&path.to_string())?.shape.clone();
    let region: Vec<Range<u64>> = shape.iter().map(|&n| 0..n).collect();
    read_region(reader, path, &region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunkstore::{CodecSpec, MemObjectStore};
    use ndarray::{s, Array3};
    use proptest::prelude::*;

    fn meta(shape: &[u64], chunks: &[u64], codec: CodecSpec) -> ArrayMeta {
        ArrayMeta {
            shape: shape.to_vec(),
            chunk_shape: chunks.to_vec(),
            dtype: DType::Float32,
            fill_value: f32::NAN.fill_bits(),
            codec,
            dimensions: (0..shape.len()).map(|d| format!("d{d}")).collect(),
            attributes: Default::default(),
        }
    }

    fn path(p: &str) -> TreePath {
        p.parse().unwrap()
    }

    fn stage() -> (StagingArea, Arc<MemObjectStore>) {
        let store = Arc::new(MemObjectStore::new());
        (StagingArea::new(store.clone(), Manifest::default()), store)
    }

    fn cube(t: usize, a: usize, g: usize) -> Array3<f32> {
        Array3::from_shape_fn((t, a, g), |(i, j, k)| (i * 10000 + j * 100 + k) as f32 * 0.25)
    }

    fn bits(a: &ArrayD<f32>) -> Vec<u32> {
        a.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn full_roundtrip_and_partial_reads() {
        let (mut st, _) = stage();
        let data = cube(70, 6, 5);
        let p = path("V/sweep_0/DBZH");
        write_array(&mut st, &p, meta(&[70, 6, 5], &[32, 6, 5], CodecSpec::default()), data.view().into_dyn(), &[0, 0, 0]).unwrap();
        let r = st.reader();
        let (full, trace) = read_full::<f32>(&r, &p).unwrap();
        assert_eq!(bits(&full), bits(&data.clone().into_dyn()));
        assert_eq!(trace.chunks_fetched, 3);

        let (slice, trace) = read_region::<f32>(&r, &p, &[40..41, 0..6, 0..5]).unwrap();
        assert_eq!(trace.chunks_fetched, 1);
        assert_eq!(bits(&slice), bits(&data.slice(s![40..41, .., ..]).to_owned().into_dyn()));

        let (_, trace) = read_region::<f32>(&r, &p, &[31..33, 2..3, 1..4]).unwrap();
        assert_eq!(trace.chunks_fetched, 2);
        assert_eq!(r.total_trace().chunks_fetched, 6);
    }

    #[test]
    fn unwritten_chunks_read_as_fill_without_fetch() {
        let (mut st, _) = stage();
        let p = path("a");
        let part = ndarray::Array2::<f32>::ones((2, 3));
        write_array(&mut st, &p, meta(&[4, 3], &[2, 3], CodecSpec::raw()), part.view().into_dyn(), &[0, 0]).unwrap();
        let r = st.reader();
        let (tail, trace) = read_region::<f32>(&r, &p, &[2..4, 0..3]).unwrap();
        assert!(tail.iter().all(|v| v.is_nan()));
        assert_eq!(trace.chunks_fetched, 0);

        let (mut st, _) = stage();
        let empty = ndarray::Array2::<f32>::zeros((0, 3));
        write_array(&mut st, &p, meta(&[4, 3], &[2, 3], CodecSpec::raw()), empty.view().into_dyn(), &[0, 0]).unwrap();
        let (all, trace) = read_full::<f32>(&st.reader(), &p).unwrap();
        assert!(all.iter().all(|v| v.is_nan()));
        assert_eq!(trace.chunks_fetched, 0);
    }

    #[test]
    fn partial_chunk_write_merges_with_prior_content() {
        let (mut st, _) = stage();
        let p = path("a");
        let m = meta(&[10], &[4], CodecSpec::default());
        let base = ndarray::Array1::<f32>::from_iter((0..10).map(|i| i as f32));
        write_array(&mut st, &p, m.clone(), base.view().into_dyn(), &[0]).unwrap();
        let patch = ndarray::Array1::<f32>::from_vec(vec![-1.0, -2.0]);
        write_array(&mut st, &p, m, patch.view().into_dyn(), &[3]).unwrap();
        let (out, _) = read_full::<f32>(&st.reader(), &p).unwrap();
        assert_eq!(out.iter().copied().collect::<Vec<_>>(), vec![0., 1., 2., -1., -2., 5., 6., 7., 8., 9.]);
    }

    #[test]
    fn rewriting_one_slice_changes_one_chunk() {
        let (mut st, _) = stage();
        let p = path("V/sweep_0/DBZH");
        let m = meta(&[64, 4, 3], &[32, 4, 3], CodecSpec::default());
        let data = cube(64, 4, 3);
        write_array(&mut st, &p, m.clone(), data.view().into_dyn(), &[0, 0, 0]).unwrap();
        let before = st.manifest().clone();
        let slice = Array3::<f32>::from_elem((1, 4, 3), 7.0);
        write_array(&mut st, &p, m, slice.view().into_dyn(), &[5, 0, 0]).unwrap();
        let a = &before.arrays["V/sweep_0/DBZH"].chunks;
        let b = &st.manifest().arrays["V/sweep_0/DBZH"].chunks;
        let differing = a.keys().filter(|k| a[*k] != b[*k]).count();
        assert_eq!(differing, 1);
    }

    #[test]
    fn identical_payloads_stored_once() {
        let (mut st, store) = stage();
        let data = Array3::<f32>::zeros((64, 4, 3));
        let m = meta(&[64, 4, 3], &[32, 4, 3], CodecSpec::default());
        write_array(&mut st, &path("a"), m.clone(), data.view().into_dyn(), &[0, 0, 0]).unwrap();
        assert_eq!(store.len(), 1);
        let size = store.total_bytes();
        write_array(&mut st, &path("b"), m, data.view().into_dyn(), &[0, 0, 0]).unwrap();
        assert_eq!(store.total_bytes(), size);
    }

    #[test]
    fn growing_an_array_keeps_old_chunks() {
        let (mut st, _) = stage();
        let p = path("t");
        let m = |n| meta(&[n], &[4], CodecSpec::default());
        let a = ndarray::Array1::<f32>::from_iter((0..6).map(|i| i as f32));
        write_array(&mut st, &p, m(6), a.view().into_dyn(), &[0]).unwrap();
        let first = st.manifest().arrays["t"].chunks["0"].clone();
        let b = ndarray::Array1::<f32>::from_iter((4..9).map(|i| i as f32));
        write_array(&mut st, &p, m(9), b.view().into_dyn(), &[4]).unwrap();
        assert_eq!(st.manifest().arrays["t"].chunks["0"], first);
        let (out, _) = read_full::<f32>(&st.reader(), &p).unwrap();
        assert_eq!(out.iter().copied().collect::<Vec<_>>(), (0..9).map(|i| i as f32).collect::<Vec<_>>());
    }

    #[test]
    fn argument_errors() {
        let (mut st, _) = stage();
        let p = path("a");
        let d = ndarray::Array1::<f32>::zeros(4);
        let m = meta(&[4], &[2], CodecSpec::raw());
        assert!(matches!(
            write_array(&mut st, &p, m.clone(), d.view().into_dyn(), &[1]),
            Err(ChunkStoreError::OutOfBounds(_))
        ));
        let i = ndarray::Array1::<i64>::zeros(4);
        assert!(matches!(
            write_array(&mut st, &p, m.clone(), i.view().into_dyn(), &[0]),
            Err(ChunkStoreError::TypeMismatch { .. })
        ));
        let two = ndarray::Array2::<f32>::zeros((2, 2));
        assert!(matches!(
            write_array(&mut st, &p, m.clone(), two.view().into_dyn(), &[0, 0]),
            Err(ChunkStoreError::RankMismatch(_))
        ));
        write_array(&mut st, &p, m, d.view().into_dyn(), &[0]).unwrap();
        let r = st.reader();
        assert!(matches!(read_full::<f32>(&r, &path("b")), Err(ChunkStoreError::UnknownPath(_))));
        assert!(matches!(read_region::<f32>(&r, &p, &[2..5]), Err(ChunkStoreError::OutOfBounds(_))));
    }

    #[test]
    fn missing_and_corrupt_objects_are_reported() {
        let store = Arc::new(MemObjectStore::new());
        let mut st = StagingArea::new(store.clone(), Manifest::default());
        let d = ndarray::Array1::<f32>::from_elem(8, 3.0);
        write_array(&mut st, &path("a"), meta(&[8], &[8], CodecSpec::raw()), d.view().into_dyn(), &[0]).unwrap();
        let manifest = st.into_manifest();
        let empty: Arc<dyn ObjectStore> = Arc::new(MemObjectStore::new());
        let r = SnapshotReader::new(Arc::new(manifest.clone()), empty);
        let err = read_full::<f32>(&r, &path("a")).unwrap_err();
        assert!(matches!(err, ChunkStoreError::MissingObject(_)) && err.is_integrity());

        let tampered = Arc::new(MemObjectStore::new());
        let mut frame = store.get(&manifest.arrays["a"].chunks["0"].id).unwrap();
        let last = frame.len() - 1;
        frame[last] ^= 1;
        let bad_id = tampered.put(&frame).unwrap();
        let mut m2 = manifest.clone();
        m2.arrays.get_mut("a").unwrap().chunks.get_mut("0").unwrap().id = bad_id;
        let r = SnapshotReader::new(Arc::new(m2), tampered);
        assert!(read_full::<f32>(&r, &path("a")).unwrap_err().is_integrity());
    }

    proptest! {
        #[test]
        fn random_regions_match_dense_reference(
            t in 1usize..40, a in 1usize..6, ct in 1u64..9, ca in 1u64..4,
            r0 in 0usize..40, r1 in 0usize..40, raw in any::<bool>(),
        ) {
            let (mut st, _) = stage();
            let data = cube(t, a, 2);
            let codec = if raw { CodecSpec::raw() } else { CodecSpec::deflate(3) };
            let p = path("x");
            write_array(&mut st, &p, meta(&[t as u64, a as u64, 2], &[ct, ca, 2], codec), data.view().into_dyn(), &[0, 0, 0]).unwrap();
            let (lo, hi) = (r0.min(r1) % t, (r0.max(r1) % t) + 1);
            let hi = hi.max(lo);
            let r = st.reader();
            let (out, trace) = read_region::<f32>(&r, &p, &[lo as u64..hi as u64, 0..a as u64, 0..2]).unwrap();
            prop_assert_eq!(bits(&out), bits(&data.slice(s![lo..hi, .., ..]).to_owned().into_dyn()));
            let expect = if hi > lo { ((hi as u64 - 1) / ct - lo as u64 / ct + 1) * (a as u64).div_ceil(ca) } else { 0 };
            prop_assert_eq!(trace.chunks_fetched, expect);
        }
    }
}
