use std::ops::Range;

use ndarray::{Array3, Ix1, Ix3};

use super::geo::SweepAxes;
use super::{AnalysisError, Result};
use crate::chunkstore::{read_region, read_site, AccessTrace, AttrValue, Element, SnapshotReader};
use crate::model::{sweep_name, MomentKind, Site, TreePath};
use crate::time::{TimeRange, Timestamp};

/// Median of the finite values (mean of the middle two for even counts); NaN if none.
pub fn median(values: &[f32]) -> f64 {
    let mut v: Vec<f64> = values.iter().filter(|x| x.is_finite()).map(|&x| x as f64).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One sweep group of a snapshot with its coordinates loaded and its moment
/// arrays left in the store.
pub struct SweepHandle<'a> {
    reader: &'a SnapshotReader,
    pub vcp: String,
    pub sweep: usize,
    pub site: Site,
    pub times: Vec<Timestamp>,
    pub azimuth_deg: Vec<f32>,
    pub range_m: Vec<f32>,
    pub range_start_m: f32,
    pub range_step_m: f32,
    path: String,
}

fn tp(s: &str) -> Result<TreePath> {
    s.parse().map_err(|_| AnalysisError::NotFound(s.to_string()))
}

fn read_1d<T: Element>(reader: &SnapshotReader, path: &str, region: Option<Range<u64>>) -> Result<Vec<T>> {
    let p = tp(path)?;
    let meta = reader.array_meta(path).map_err(|_| AnalysisError::NotFound(path.to_string()))?;
    let region = region.unwrap_or(0..meta.shape.first().copied().unwrap_or(0));
    let (a, _) = read_region::<T>(reader, &p, &[region])?;
    let a = a.into_dimensionality::<Ix1>().map_err(|_| AnalysisError::NotFound(format!("{path} (1-d)")))?;
    Ok(a.to_vec())
}

impl<'a> SweepHandle<'a> {
    pub fn open(reader: &'a SnapshotReader, vcp: &str, sweep: usize) -> Result<Self> {
        let m = reader.manifest();
        if !m.groups.contains_key(vcp) {
            return Err(AnalysisError::NotFound(format!("group {vcp:?}")));
        }
        let path = format!("{vcp}/{}", sweep_name(sweep));
        let group = m.groups.get(&path).ok_or_else(|| AnalysisError::NotFound(format!("group {path:?}")))?;
        let num = |k: &str| -> Result<f32> {
            group
                .attributes
                .get(k)
                .and_then(AttrValue::as_f64)
                .map(|v| v as f32)
                .ok_or_else(|| AnalysisError::NotFound(format!("{path} attribute {k}")))
        };
        Ok(SweepHandle {
            reader,
            vcp: vcp.to_string(),
            sweep,
            site: read_site(m)?,
            times: read_1d::<i64>(reader, &format!("{vcp}/time"), None)?.into_iter().map(Timestamp).collect(),
            azimuth_deg: read_1d(reader, &format!("{path}/azimuth"), None)?,
            range_m: read_1d(reader, &format!("{path}/range"), None)?,
            range_start_m: num("range_start_m")?,
            range_step_m: num("range_step_m")?,
            path,
        })
    }

    pub fn select(&self, range: &TimeRange) -> Range<usize> {
        range.select(&self.times)
    }

    pub fn has_moment(&self, kind: MomentKind) -> bool {
        self.reader.manifest().arrays.contains_key(&self.moment_path(kind))
    }

    fn moment_path(&self, kind: MomentKind) -> String {
        format!("{}/{}", self.path, kind.code())
    }

    pub fn require_moment(&self, kind: MomentKind) -> Result<()> {
        if self.has_moment(kind) {
            Ok(())
        } else {
            Err(AnalysisError::NotFound(format!("moment {:?}", self.moment_path(kind))))
        }
    }

    pub fn elevations(&self, sel: Range<usize>) -> Result<Vec<f32>> {
        read_1d(self.reader, &format!("{}/elevation", self.path), Some(sel.start as u64..sel.end as u64))
    }

    pub fn axes(&self, elevation_deg: f64) -> SweepAxes {
        SweepAxes {
            azimuth_deg: self.azimuth_deg.clone(),
            range_start_m: self.range_start_m as f64,
            range_step_m: self.range_step_m as f64,
            n_gates: self.range_m.len(),
            elevation_deg,
        }
    }

    /// Moment values over `times x rays x gates`, with the fetch trace.
    pub fn moment(
        &self,
        kind: MomentKind,
        times: Range<usize>,
        rays: Range<usize>,
        gates: Range<usize>,
    ) -> Result<(Array3<f32>, AccessTrace)> {
        self.require_moment(kind)?;
        let p = tp(&self.moment_path(kind))?;
        let r = |x: Range<usize>| x.start as u64..x.end as u64;
        let (a, trace) = read_region::<f32>(self.reader, &p, &[r(times), r(rays), r(gates)])?;
        let a = a.into_dimensionality::<Ix3>().map_err(|_| AnalysisError::NotFound(format!("{p} (3-d)")))?;
        Ok((a, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::median;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[f32::NAN, 1.0]), 1.0);
        assert!(median(&[]).is_nan());
    }
}
