use std::ops::Range;

use super::ChunkStoreError;
use crate::model::TreePath;

/// Regular chunking of an n-d array; edge chunks may be partial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkGrid {
    array_shape: Vec<u64>,
    chunk_shape: Vec<u64>,
}

/// Address of one stored chunk.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkKey {
    pub path: TreePath,
    pub indices: Vec<u64>,
}

impl ChunkKey {
    /// Manifest key, indices joined by `.` (e.g. `2.0.0`).
    pub fn encode(indices: &[u64]) -> String {
        let parts: Vec<String> = indices.iter().map(u64::to_string).collect();
        parts.join(".")
    }

    pub fn decode(key: &str) -> Option<Vec<u64>> {
        key.split('.').map(|p| p.parse().ok()).collect()
    }

    pub fn key(&self) -> String {
        Self::encode(&self.indices)
    }
}

impl ChunkGrid {
    pub fn new(array_shape: Vec<u64>, chunk_shape: Vec<u64>) -> Result<Self, ChunkStoreError> {
        if array_shape.len() != chunk_shape.len() {
            return Err(ChunkStoreError::RankMismatch(format!(
                "array rank {} vs chunk rank {}",
                array_shape.len(),
                chunk_shape.len()
            )));
        }
        if chunk_shape.iter().any(|&c| c == 0) {
            return Err(ChunkStoreError::InvalidArgument("chunk extents must be at least 1".into()));
        }
        Ok(ChunkGrid { array_shape, chunk_shape })
    }

    pub fn rank(&self) -> usize {
        self.array_shape.len()
    }

    pub fn array_shape(&self) -> &[u64] {
        &self.array_shape
    }

    pub fn chunk_shape(&self) -> &[u64] {
        &self.chunk_shape
    }

    /// Chunks per dimension: `ceil(shape / chunk)`.
    pub fn grid_shape(&self) -> Vec<u64> {
        self.array_shape.iter().zip(&self.chunk_shape).map(|(s, c)| s.div_ceil(*c)).collect()
    }

    /// Element range covered by a chunk, clipped to the array.
    pub fn chunk_bounds(&self, indices: &[u64]) -> Vec<Range<u64>> {
        indices
            .iter()
            .zip(&self.chunk_shape)
            .zip(&self.array_shape)
            .map(|((i, c), s)| (i * c)..((i + 1) * c).min(*s))
            .collect()
    }

    pub fn chunk_extent(&self, indices: &[u64]) -> Vec<u64> {
        self.chunk_bounds(indices).iter().map(|r| r.end - r.start).collect()
    }

    pub fn check_region(&self, region: &[Range<u64>]) -> Result<(), ChunkStoreError> {
        if region.len() != self.rank() {
            return Err(ChunkStoreError::RankMismatch(format!("region rank {} vs array rank {}", region.len(), self.rank())));
        }
        for (d, (r, s)) in region.iter().zip(&self.array_shape).enumerate() {
            if r.start > r.end || r.end > *s {
                return Err(ChunkStoreError::OutOfBounds(format!("dimension {d}: {r:?} outside 0..{s}")));
            }
        }
        Ok(())
    }

    /// Grid indices of every chunk intersecting `region`, in row-major order.
    pub fn chunks_intersecting(&self, region: &[Range<u64>]) -> Vec<Vec<u64>> {
        if region.iter().any(|r| r.is_empty()) {
            return Vec::new();
        }
        let spans: Vec<Range<u64>> = region
            .iter()
            .zip(&self.chunk_shape)
            .map(|(r, c)| (r.start / c)..((r.end - 1) / c + 1))
            .collect();
        let mut out = Vec::new();
        let mut cur: Vec<u64> = spans.iter().map(|s| s.start).collect();
        if cur.is_empty() {
            return vec![Vec::new()];
        }
        loop {
            out.push(cur.clone());
            let mut d = cur.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                cur[d] += 1;
                if cur[d] < spans[d].end {
                    break;
                }
                cur[d] = spans[d].start;
            }
        }
    }
}

/// Chunk coordinates and in-chunk offset of one element.
pub fn chunk_of(grid: &ChunkGrid, index: &[u64]) -> Result<(Vec<u64>, Vec<u64>), ChunkStoreError> {
    if index.len() != grid.rank() {
        return Err(ChunkStoreError::RankMismatch(format!("index rank {} vs array rank {}", index.len(), grid.rank())));
    }
    if let Some(d) = (0..index.len()).find(|&d| index[d] >= grid.array_shape[d]) {
        return Err(ChunkStoreError::OutOfBounds(format!(
            "index {} outside 0..{} in dimension {d}",
            index[d], grid.array_shape[d]
        )));
    }
    let chunk = index.iter().zip(&grid.chunk_shape).map(|(i, c)| i / c).collect();
    let offset = index.iter().zip(&grid.chunk_shape).map(|(i, c)| i % c).collect();
    Ok((chunk, offset))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_of_examples() {
        let g = ChunkGrid::new(vec![1000, 360, 500], vec![32, 360, 500]).unwrap();
        assert_eq!(chunk_of(&g, &[65, 0, 0]).unwrap(), (vec![2, 0, 0], vec![1, 0, 0]));
        assert_eq!(chunk_of(&g, &[0, 0, 0]).unwrap(), (vec![0, 0, 0], vec![0, 0, 0]));
        let g = ChunkGrid::new(vec![100], vec![32]).unwrap();
        assert_eq!(chunk_of(&g, &[99]).unwrap(), (vec![3], vec![3]));
        assert_eq!(g.chunk_extent(&[3]), vec![4]);
        assert_eq!(g.grid_shape(), vec![4]);
        assert!(matches!(chunk_of(&g, &[100]), Err(ChunkStoreError::OutOfBounds(_))));
    }

    #[test]
    fn intersecting_chunks() {
        let g = ChunkGrid::new(vec![100, 10], vec![32, 4]).unwrap();
        let c = g.chunks_intersecting(&[30..70, 3..5]);
        assert_eq!(c, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1], vec![2, 0], vec![2, 1]]);
        assert!(g.chunks_intersecting(&[5..5, 0..10]).is_empty());
    }

    #[test]
    fn key_encoding() {
        assert_eq!(ChunkKey::encode(&[3, 0, 12]), "3.0.12");
        assert_eq!(ChunkKey::decode("3.0.12"), Some(vec![3, 0, 12]));
        assert_eq!(ChunkKey::decode("3.x"), None);
    }

    #[test]
    fn zero_chunk_rejected() {
        assert!(ChunkGrid::new(vec![4], vec![0]).is_err());
        assert!(ChunkGrid::new(vec![4], vec![1, 1]).is_err());
    }
}
