//! File-per-scan reference pipeline.
//!
//! Every query lists the archive directory and fully decodes every `.rdt`
//! file, with no index and no cache, then feeds the selected sweep through the
//! same kernels as the store path. Used to benchmark the store and as an
//! equality check on its products.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Axis};

use super::geo::{locate_gate, GeoPoint, SweepAxes};
use super::qpe::AccumulationGrid;
use super::qvp::{check_threshold, QvpProfile};
use super::sweep::median;
use super::timeseries::Timeseries;
use super::zr::ZrParams;
use super::{AnalysisError, Result};
use crate::chunkstore::AccessTrace;
use crate::ingest::parse_rdt_raw;
use crate::model::{canonicalize_azimuths, range_axis, MomentKind, Site};
use crate::par;
use crate::time::{TimeRange, Timestamp};

/// A directory of raw volume files.
#[derive(Clone, Debug)]
pub struct RawArchive {
    dir: PathBuf,
    n_rays: usize,
}

struct Extract {
    time: Timestamp,
    site: Site,
    elevation: f32,
    range_start_m: f32,
    range_step_m: f32,
    azimuth_deg: Vec<f32>,
    data: Option<Array2<f32>>,
}

struct Stack {
    site: Site,
    times: Vec<Timestamp>,
    elevations: Vec<f32>,
    azimuth_deg: Vec<f32>,
    range_m: Vec<f32>,
    range_start_m: f32,
    range_step_m: f32,
    data: Array3<f32>,
}

impl RawArchive {
    /// `n_rays` is the canonical azimuth count (360 unless the store was
    /// built with other tree options).
    pub fn new(dir: &Path, n_rays: usize) -> Self {
        RawArchive { dir: dir.to_path_buf(), n_rays }
    }

    fn files(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(&self.dir)? {
            let p = e?.path();
            if p.is_file() && p.extension().is_some_and(|x| x == "rdt") {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    }

    fn load(&self, vcp: &str, sweep: usize, kind: MomentKind, range: &TimeRange) -> Result<Stack> {
        let files = self.files()?;
        let n_rays = self.n_rays;
        let found = par::try_map(&files, |path| -> Result<Option<Extract>> {
            let bytes = std::fs::read(path)?;
            let vol = parse_rdt_raw(&bytes).map_err(|source| AnalysisError::Raw { path: path.display().to_string(), source })?;
            if vol.vcp_name != vcp || !range.contains(vol.volume_time) {
                return Ok(None);
            }
            let s = vol
                .sweeps
                .get(sweep)
                .ok_or_else(|| AnalysisError::NotFound(format!("sweep {sweep} in {}", path.display())))?;
            let c = canonicalize_azimuths(s, n_rays)?;
            let g = &c.geometry;
            Ok(Some(Extract {
                time: vol.volume_time,
                site: vol.site,
                elevation: g.elevation_deg,
                range_start_m: g.range_start_m,
                range_step_m: g.range_step_m,
                azimuth_deg: g.azimuth_deg.clone(),
                data: c.moments.get(&kind).cloned(),
            }))
        })?;
        let mut ex: Vec<Extract> = found.into_iter().flatten().collect();
        ex.sort_by_key(|e| e.time);
        let Some(first) = ex.first() else { return Err(AnalysisError::EmptySelection) };
        if ex.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(AnalysisError::InvalidArgument("archive holds two volumes with one time".into()));
        }
        let shape = ex.iter().find_map(|e| e.data.as_ref().map(|d| d.dim()));
        let Some((n_r, n_g)) = shape else {
            return Err(AnalysisError::NotFound(format!("moment {kind} in {vcp} sweep {sweep}")));
        };
        let same = |e: &Extract| {
            e.range_start_m.to_bits() == first.range_start_m.to_bits()
                && e.range_step_m.to_bits() == first.range_step_m.to_bits()
                && e.data.as_ref().is_none_or(|d| d.dim() == (n_r, n_g))
                && e.site == first.site
        };
        if !ex.iter().all(same) {
            return Err(AnalysisError::InvalidArgument("volumes disagree on site or sweep geometry".into()));
        }
        let nan = Array2::from_elem((n_r, n_g), f32::NAN);
        let views: Vec<_> = ex.iter().map(|e| e.data.as_ref().unwrap_or(&nan).view()).collect();
        let data = ndarray::stack(Axis(0), &views).expect("shapes checked");
        Ok(Stack {
            site: first.site.clone(),
            times: ex.iter().map(|e| e.time).collect(),
            elevations: ex.iter().map(|e| e.elevation).collect(),
            azimuth_deg: first.azimuth_deg.clone(),
            range_m: range_axis(first.range_start_m, first.range_step_m, n_g),
            range_start_m: first.range_start_m,
            range_step_m: first.range_step_m,
            data,
        })
    }

    pub fn qvp(&self, vcp: &str, sweep: usize, moment: MomentKind, range: &TimeRange, threshold: f64) -> Result<QvpProfile> {
        check_threshold(threshold)?;
        let s = self.load(vcp, sweep, moment, range)?;
        QvpProfile::assemble(
            vcp,
            sweep,
            moment,
            threshold,
            s.site.altitude_m,
            s.times,
            &s.elevations,
            &s.range_m,
            s.data.view(),
            AccessTrace::default(),
        )
    }

    pub fn qpe(&self, vcp: &str, sweep: usize, range: &TimeRange, params: &ZrParams, max_gap_s: f64) -> Result<AccumulationGrid> {
        params.validate()?;
        let s = self.load(vcp, sweep, MomentKind::Dbzh, range)?;
        if s.times.len() < 2 {
            return Err(AnalysisError::InsufficientData(s.times.len()));
        }
        AccumulationGrid::assemble(
            vcp,
            sweep,
            *params,
            max_gap_s,
            s.times,
            &s.azimuth_deg,
            &s.range_m,
            s.data.view(),
            AccessTrace::default(),
        )
    }

    pub fn timeseries(
        &self,
        vcp: &str,
        sweep: usize,
        moment: MomentKind,
        target: &GeoPoint,
        range: &TimeRange,
    ) -> Result<Timeseries> {
        let mut out = Timeseries {
            vcp: vcp.to_string(),
            sweep,
            moment,
            target: *target,
            gate: None,
            times: Vec::new(),
            values: Vec::new(),
            moment_trace: AccessTrace::default(),
        };
        let s = match self.load(vcp, sweep, moment, range) {
            Err(AnalysisError::EmptySelection) => return Ok(out),
            other => other?,
        };
        let axes = SweepAxes {
            azimuth_deg: s.azimuth_deg.clone(),
            range_start_m: s.range_start_m as f64,
            range_step_m: s.range_step_m as f64,
            n_gates: s.range_m.len(),
            elevation_deg: median(&s.elevations),
        };
        let g = locate_gate(&s.site, &axes, sweep, target)?;
        out.values = s.data.slice(ndarray::s![.., g.ray, g.gate]).to_vec();
        out.times = s.times;
        out.gate = Some(g);
        Ok(out)
    }
}
