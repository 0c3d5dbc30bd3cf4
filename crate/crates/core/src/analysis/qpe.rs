use ndarray::{Array2, ArrayView3};

use super::sweep::SweepHandle;
use super::zr::{RateCurve, ZrParams};
use super::{AnalysisError, Result};
use crate::chunkstore::{AccessTrace, SnapshotReader};
use crate::model::MomentKind;
use crate::par;
use crate::time::{TimeRange, Timestamp};

pub const DEFAULT_MAX_GAP_S: f64 = 900.0;

/// Rainfall depth per gate over a time span.
#[derive(Clone, Debug)]
pub struct AccumulationGrid {
    pub vcp: String,
    pub sweep: usize,
    pub params: ZrParams,
    pub max_gap_s: f64,
    pub times: Vec<Timestamp>,
    pub azimuth_deg: Vec<f64>,
    pub range_m: Vec<f64>,
    /// (azimuth, range) accumulated depth in mm.
    pub totals_mm: Array2<f64>,
    /// (azimuth, range) seconds of integrated intervals whose two end samples are finite.
    pub coverage_seconds: Array2<f64>,
    pub moment_trace: AccessTrace,
}

/// Rays handled per work item.
const RAY_BLOCK: usize = 8;

/// Trapezoidal integration of rain rate over the time axis of `dbz`
/// (time, ray, gate). Intervals longer than `max_gap_s` contribute nothing;
/// NaN reflectivity counts as zero rain. Each gate is summed in time order.
pub fn qpe_kernel(
    times: &[Timestamp],
    dbz: ArrayView3<f32>,
    params: &ZrParams,
    max_gap_s: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    params.validate()?;
    if !(max_gap_s >= 0.0) {
        return Err(AnalysisError::InvalidArgument(format!("max gap {max_gap_s} must be nonnegative")));
    }
    let (n_t, n_r, n_g) = dbz.dim();
    if n_t != times.len() {
        return Err(AnalysisError::InvalidArgument(format!("{} times for {n_t} scans", times.len())));
    }
    if n_t < 2 {
        return Err(AnalysisError::InsufficientData(n_t));
    }
    let curve = RateCurve::new(params);
    let dts: Vec<f64> = times.windows(2).map(|w| (w[1].0 - w[0].0) as f64 / 1e9).collect();
    let n_blocks = n_r.div_ceil(RAY_BLOCK);
    let blocks = par::map_range(n_blocks, |b| {
        let rays = b * RAY_BLOCK..((b + 1) * RAY_BLOCK).min(n_r);
        let w = rays.len() * n_g;
        let fill = |t: usize, rate: &mut [f64], ok: &mut [bool]| {
            for (j, &v) in dbz.slice(ndarray::s![t, rays.clone(), ..]).iter().enumerate() {
                let x = curve.rate(v as f64);
                ok[j] = !x.is_nan();
                rate[j] = if ok[j] { x } else { 0.0 };
            }
        };
        let mut total = vec![0f64; w];
        let mut cover = vec![0f64; w];
        let (mut prev, mut prev_ok) = (vec![0f64; w], vec![false; w]);
        let (mut next, mut next_ok) = (vec![0f64; w], vec![false; w]);
        fill(0, &mut prev, &mut prev_ok);
        for (i, &dt) in dts.iter().enumerate() {
            fill(i + 1, &mut next, &mut next_ok);
            if dt <= max_gap_s {
                for j in 0..w {
                    total[j] += 0.5 * (prev[j] + next[j]) * dt / 3600.0;
                    if prev_ok[j] && next_ok[j] {
                        cover[j] += dt;
                    }
                }
            }
            std::mem::swap(&mut prev, &mut next);
            std::mem::swap(&mut prev_ok, &mut next_ok);
        }
        (total, cover)
    });
    let mut totals = Array2::zeros((n_r, n_g));
    let mut coverage = Array2::zeros((n_r, n_g));
    for (b, (t, c)) in blocks.into_iter().enumerate() {
        let rays = b * RAY_BLOCK..((b + 1) * RAY_BLOCK).min(n_r);
        let shape = (rays.len(), n_g);
        totals.slice_mut(ndarray::s![rays.clone(), ..]).assign(&ndarray::ArrayView2::from_shape(shape, &t).expect("block shape"));
        coverage.slice_mut(ndarray::s![rays, ..]).assign(&ndarray::ArrayView2::from_shape(shape, &c).expect("block shape"));
    }
    Ok((totals, coverage))
}

impl AccumulationGrid {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        vcp: &str,
        sweep: usize,
        params: ZrParams,
        max_gap_s: f64,
        times: Vec<Timestamp>,
        azimuth_deg: &[f32],
        range_m: &[f32],
        dbz: ArrayView3<f32>,
        moment_trace: AccessTrace,
    ) -> Result<Self> {
        let (totals_mm, coverage_seconds) = qpe_kernel(&times, dbz, &params, max_gap_s)?;
        Ok(AccumulationGrid {
            vcp: vcp.to_string(),
            sweep,
            params,
            max_gap_s,
            times,
            azimuth_deg: azimuth_deg.iter().map(|&a| a as f64).collect(),
            range_m: range_m.iter().map(|&r| r as f64).collect(),
            totals_mm,
            coverage_seconds,
            moment_trace,
        })
    }
}

/// Rainfall accumulation from DBZH over the scans in `range`.
pub fn accumulate_qpe(
    reader: &SnapshotReader,
    vcp: &str,
    sweep: usize,
    range: &TimeRange,
    params: &ZrParams,
    max_gap_s: f64,
) -> Result<AccumulationGrid> {
    params.validate()?;
    let h = SweepHandle::open(reader, vcp, sweep)?;
    h.require_moment(MomentKind::Dbzh)?;
    let sel = h.select(range);
    if sel.len() < 2 {
        return Err(AnalysisError::InsufficientData(sel.len()));
    }
    let (dbz, trace) = h.moment(MomentKind::Dbzh, sel.clone(), 0..h.azimuth_deg.len(), 0..h.range_m.len())?;
    AccumulationGrid::assemble(vcp, sweep, *params, max_gap_s, h.times[sel].to_vec(), &h.azimuth_deg, &h.range_m, dbz.view(), trace)
}
