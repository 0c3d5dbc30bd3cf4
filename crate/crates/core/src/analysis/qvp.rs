use ndarray::{Array2, ArrayView3};

use super::sweep::{median, SweepHandle};
use super::{beam_height, AnalysisError, Result};
use crate::chunkstore::{AccessTrace, SnapshotReader};
use crate::model::MomentKind;
use crate::par;
use crate::time::{TimeRange, Timestamp};

pub const DEFAULT_VALID_FRACTION: f64 = 0.5;

/// Azimuthal means of one sweep's moment, per (time, gate).
#[derive(Clone, Debug)]
pub struct QvpProfile {
    pub vcp: String,
    pub sweep: usize,
    pub moment: MomentKind,
    pub threshold: f64,
    /// Median measured elevation over the selected scans.
    pub elevation_deg: f64,
    pub site_altitude_m: f64,
    pub times: Vec<Timestamp>,
    pub range_m: Vec<f64>,
    pub height_m: Vec<f64>,
    /// (time, range); NaN where too few rays are finite.
    pub values: Array2<f64>,
    /// (time, range) fraction of rays with a finite sample.
    pub valid_fraction: Array2<f64>,
    /// Moment chunks fetched to compute the profile.
    pub moment_trace: AccessTrace,
}

/// Per (time, gate): mean over finite rays, accumulated in f64 in ray order.
pub fn qvp_kernel(data: ArrayView3<f32>, threshold: f64) -> (Array2<f64>, Array2<f64>) {
    let (n_t, n_r, n_g) = data.dim();
    let rows = par::map_range(n_t, |t| {
        let mut sum = vec![0f64; n_g];
        let mut count = vec![0u32; n_g];
        for r in 0..n_r {
            for (g, &v) in data.slice(ndarray::s![t, r, ..]).iter().enumerate() {
                if v.is_finite() {
                    sum[g] += v as f64;
                    count[g] += 1;
                }
            }
        }
        let mut values = Vec::with_capacity(n_g);
        let mut frac = Vec::with_capacity(n_g);
        for g in 0..n_g {
            let f = if n_r == 0 { 0.0 } else { count[g] as f64 / n_r as f64 };
            frac.push(f);
            values.push(if count[g] == 0 || f < threshold { f64::NAN } else { sum[g] / count[g] as f64 });
        }
        (values, frac)
    });
    let mut values = Array2::zeros((n_t, n_g));
    let mut frac = Array2::zeros((n_t, n_g));
    for (t, (v, f)) in rows.into_iter().enumerate() {
        values.row_mut(t).assign(&ndarray::ArrayView1::from(&v));
        frac.row_mut(t).assign(&ndarray::ArrayView1::from(&f));
    }
    (values, frac)
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(AnalysisError::InvalidArgument(format!("valid-fraction threshold {threshold} outside [0, 1]")))
    }
}

impl QvpProfile {
    /// Build a profile from stacked (time, ray, gate) data.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        vcp: &str,
        sweep: usize,
        moment: MomentKind,
        threshold: f64,
        site_altitude_m: f32,
        times: Vec<Timestamp>,
        elevations: &[f32],
        range_m: &[f32],
        data: ArrayView3<f32>,
        moment_trace: AccessTrace,
    ) -> Result<Self> {
        let elevation_deg = median(elevations);
        let alt = site_altitude_m as f64;
        let height_m = range_m.iter().map(|&r| beam_height(r as f64, elevation_deg, alt)).collect::<Result<_>>()?;
        let (values, valid_fraction) = qvp_kernel(data, threshold);
        Ok(QvpProfile {
            vcp: vcp.to_string(),
            sweep,
            moment,
            threshold,
            elevation_deg,
            site_altitude_m: alt,
            times,
            range_m: range_m.iter().map(|&r| r as f64).collect(),
            height_m,
            values,
            valid_fraction,
            moment_trace,
        })
    }
}

/// Quasi-vertical profile of `moment` over the scans in `range`.
pub fn qvp(
    reader: &SnapshotReader,
    vcp: &str,
    sweep: usize,
    moment: MomentKind,
    range: &TimeRange,
    threshold: f64,
) -> Result<QvpProfile> {
    check_threshold(threshold)?;
    let h = SweepHandle::open(reader, vcp, sweep)?;
    h.require_moment(moment)?;
    let sel = h.select(range);
    if sel.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    let elevations = h.elevations(sel.clone())?;
    let (data, trace) = h.moment(moment, sel.clone(), 0..h.azimuth_deg.len(), 0..h.range_m.len())?;
    QvpProfile::assemble(
        vcp,
        sweep,
        moment,
        threshold,
        h.site.altitude_m,
        h.times[sel].to_vec(),
        &elevations,
        &h.range_m,
        data.view(),
        trace,
    )
}
