use super::geo::{locate_gate, GatePointer, GeoPoint};
use super::sweep::{median, SweepHandle};
use super::Result;
use crate::chunkstore::{AccessTrace, SnapshotReader};
use crate::model::MomentKind;
use crate::time::{TimeRange, Timestamp};

/// Moment values at one gate over time.
#[derive(Clone, Debug)]
pub struct Timeseries {
    pub vcp: String,
    pub sweep: usize,
    pub moment: MomentKind,
    pub target: GeoPoint,
    /// `None` when the time range selects no scans.
    pub gate: Option<GatePointer>,
    pub times: Vec<Timestamp>,
    pub values: Vec<f32>,
    pub moment_trace: AccessTrace,
}

/// Nearest-gate series at `target`; the gate is located at the median
/// elevation of the selected scans.
pub fn extract_timeseries(
    reader: &SnapshotReader,
    vcp: &str,
    sweep: usize,
    moment: MomentKind,
    target: &GeoPoint,
    range: &TimeRange,
) -> Result<Timeseries> {
    let h = SweepHandle::open(reader, vcp, sweep)?;
    h.require_moment(moment)?;
    let sel = h.select(range);
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
    if sel.is_empty() {
        return Ok(out);
    }
    let elevation = median(&h.elevations(sel.clone())?);
    let gate = locate_gate(&h.site, &h.axes(elevation), sweep, target)?;
    let (data, trace) = h.moment(moment, sel.clone(), gate.ray..gate.ray + 1, gate.gate..gate.gate + 1)?;
    out.values = data.iter().copied().collect();
    out.times = h.times[sel].to_vec();
    out.gate = Some(gate);
    out.moment_trace = trace;
    Ok(out)
}
