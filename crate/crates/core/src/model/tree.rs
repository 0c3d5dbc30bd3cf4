use std::collections::{BTreeMap, BTreeSet};

use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use super::{canonicalize_azimuths, range_axis, BitwiseEq, ModelError, MomentKind, Site, Sweep, VolumeScan};
use crate::par;
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeOptions {
    /// Canonical ray count for newly created sweep groups.
    pub n_rays: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions { n_rays: 360 }
    }
}

/// Time-aligned archive of one radar site: one group per coverage pattern.
#[derive(Clone, Debug, Default)]
pub struct RadarTree {
    pub site: Option<Site>,
    pub groups: BTreeMap<String, VcpGroup>,
}

/// All volumes of one coverage pattern, stacked along time.
#[derive(Clone, Debug)]
pub struct VcpGroup {
    pub name: String,
    /// Volume start times, strictly increasing.
    pub times: Vec<Timestamp>,
    pub sweeps: Vec<SweepGroup>,
}

/// Sweep `k` of every volume in a group, on a shared canonical grid.
#[derive(Clone, Debug)]
pub struct SweepGroup {
    pub azimuth_deg: Vec<f32>,
    pub range_start_m: f32,
    pub range_step_m: f32,
    pub range_m: Vec<f32>,
    /// Measured elevation per time step.
    pub elevation_deg: Vec<f32>,
    /// Per (time, ray) acquisition time in ns; `i64::MIN` where no ray was measured.
    pub ray_times: Array2<i64>,
    /// Moment arrays shaped (time, azimuth, range).
    pub moments: BTreeMap<MomentKind, Array3<f32>>,
}

impl SweepGroup {
    pub fn n_times(&self) -> usize {
        self.elevation_deg.len()
    }

    pub fn n_rays(&self) -> usize {
        self.azimuth_deg.len()
    }

    pub fn n_gates(&self) -> usize {
        self.range_m.len()
    }

    fn empty(first: &Sweep, n_rays: usize) -> Self {
        let g = &first.geometry;
        SweepGroup {
            azimuth_deg: super::canonical_azimuths(n_rays),
            range_start_m: g.range_start_m,
            range_step_m: g.range_step_m,
            range_m: range_axis(g.range_start_m, g.range_step_m, g.n_gates),
            elevation_deg: Vec::new(),
            ray_times: Array2::zeros((0, n_rays)),
            moments: BTreeMap::new(),
        }
    }

    fn check_range(&self, vcp: &str, k: usize, s: &Sweep) -> Result<(), ModelError> {
        let g = &s.geometry;
        let same = g.range_start_m.to_bits() == self.range_start_m.to_bits()
            && g.range_step_m.to_bits() == self.range_step_m.to_bits()
            && g.n_gates == self.n_gates();
        if same {
            Ok(())
        } else {
            Err(ModelError::GeometryConflict {
                vcp: vcp.into(),
                sweep: k,
                detail: format!(
                    "range grid ({}, {}, {}) differs from group grid ({}, {}, {})",
                    g.range_start_m,
                    g.range_step_m,
                    g.n_gates,
                    self.range_start_m,
                    self.range_step_m,
                    self.n_gates()
                ),
            })
        }
    }

    /// Insert one canonical sweep as time step `pos`.
    fn insert(&mut self, pos: usize, sweep: &Sweep) {
        let (n_rays, n_gates) = (self.n_rays(), self.n_gates());
        let n_times = self.n_times();
        for kind in sweep.moments.keys() {
            self.moments
                .entry(*kind)
                .or_insert_with(|| Array3::from_elem((n_times, n_rays, n_gates), f32::NAN));
        }
        let nan_slab = Array2::from_elem((n_rays, n_gates), f32::NAN);
        for (kind, arr) in self.moments.iter_mut() {
            let slab = sweep.moments.get(kind).map_or(nan_slab.view(), |a| a.view());
            insert_slab(arr, pos, slab);
        }
        let times: Vec<i64> = sweep.geometry.ray_times.iter().map(|t| t.0).collect();
        let row = ndarray::ArrayView1::from(&times);
        if pos == n_times {
            self.ray_times.push_row(row).expect("ray time row has grid length");
        } else {
            let mut rt = Array2::zeros((n_times + 1, n_rays));
            rt.slice_mut(s![..pos, ..]).assign(&self.ray_times.slice(s![..pos, ..]));
            rt.row_mut(pos).assign(&row);
            rt.slice_mut(s![pos + 1.., ..]).assign(&self.ray_times.slice(s![pos.., ..]));
            self.ray_times = rt;
        }
        self.elevation_deg.insert(pos, sweep.geometry.elevation_deg);
    }
}

fn insert_slab(arr: &mut Array3<f32>, pos: usize, slab: ArrayView2<f32>) {
    let n = arr.len_of(Axis(0));
    if pos == n {
        arr.push(Axis(0), slab).expect("slab matches sweep grid");
        return;
    }
    let (_, r, g) = arr.dim();
    let mut out = Array3::from_elem((n + 1, r, g), f32::NAN);
    out.slice_mut(s![..pos, .., ..]).assign(&arr.slice(s![..pos, .., ..]));
    out.slice_mut(s![pos, .., ..]).assign(&slab);
    out.slice_mut(s![pos + 1.., .., ..]).assign(&arr.slice(s![pos.., .., ..]));
    *arr = out;
}

impl RadarTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, vcp: &str) -> Option<&VcpGroup> {
        self.groups.get(vcp)
    }

    /// Append a volume at the end of its group's time axis.
    pub fn append_volume(&mut self, volume: &VolumeScan) -> Result<(), ModelError> {
        self.append_volume_with(volume, &TreeOptions::default())
    }

    pub fn append_volume_with(&mut self, volume: &VolumeScan, opts: &TreeOptions) -> Result<(), ModelError> {
        if let Some(last) = self.groups.get(&volume.vcp_name).and_then(|g| g.times.last()) {
            if volume.volume_time <= *last {
                if volume.volume_time == *last {
                    return Err(ModelError::DuplicateTime { vcp: volume.vcp_name.clone(), time: *last });
                }
                return Err(ModelError::OutOfOrder {
                    vcp: volume.vcp_name.clone(),
                    time: volume.volume_time,
                    last: *last,
                });
            }
        }
        self.insert_volume_with(volume, opts).map(|_| ())
    }

    /// Insert a volume at its time-sorted position; returns that position.
    ///
    /// Rejects a volume whose time already exists in the group. On error the
    /// tree is unchanged.
    pub fn insert_volume_with(&mut self, volume: &VolumeScan, opts: &TreeOptions) -> Result<usize, ModelError> {
        volume.validate()?;
        if opts.n_rays == 0 {
            return Err(ModelError::InvalidArgument("n_rays must be at least 1".into()));
        }
        if let Some(site) = &self.site {
            if !site.same_as(&volume.site) {
                return Err(ModelError::SiteMismatch { expected: site.to_string(), found: volume.site.to_string() });
            }
        }
        let vcp = volume.vcp_name.as_str();
        let existing = self.groups.get(vcp);
        let pos = match existing {
            Some(g) => {
                let pos = g.times.partition_point(|t| *t < volume.volume_time);
                if g.times.get(pos) == Some(&volume.volume_time) {
                    return Err(ModelError::DuplicateTime { vcp: vcp.into(), time: volume.volume_time });
                }
                if g.sweeps.len() != volume.sweeps.len() {
                    return Err(ModelError::GeometryConflict {
                        vcp: vcp.into(),
                        sweep: g.sweeps.len().min(volume.sweeps.len()),
                        detail: format!("{} sweeps, group has {}", volume.sweeps.len(), g.sweeps.len()),
                    });
                }
                pos
            }
            None => 0,
        };

        // Canonicalize and check everything before touching the tree.
        let mut canonical = Vec::with_capacity(volume.sweeps.len());
        for (k, sweep) in volume.sweeps.iter().enumerate() {
            let n_rays = existing.map_or(opts.n_rays, |g| g.sweeps[k].n_rays());
            if let Some(g) = existing {
                g.sweeps[k].check_range(vcp, k, sweep)?;
            }
            canonical.push(canonicalize_azimuths(sweep, n_rays)?);
        }

        self.site.get_or_insert_with(|| volume.site.clone());
        let group = self.groups.entry(vcp.to_string()).or_insert_with(|| VcpGroup {
            name: vcp.to_string(),
            times: Vec::new(),
            sweeps: canonical.iter().map(|s| SweepGroup::empty(s, s.geometry.n_rays())).collect(),
        });
        for (sg, sweep) in group.sweeps.iter_mut().zip(&canonical) {
            sg.insert(pos, sweep);
        }
        group.times.insert(pos, volume.volume_time);
        Ok(pos)
    }
}

/// Stack volumes into a tree with default options (360-ray grid).
pub fn build_tree(volumes: &[VolumeScan]) -> Result<RadarTree, ModelError> {
    build_tree_with(volumes, &TreeOptions::default())
}

/// Group volumes by coverage pattern and stack each sweep index along time.
pub fn build_tree_with(volumes: &[VolumeScan], opts: &TreeOptions) -> Result<RadarTree, ModelError> {
    if volumes.is_empty() {
        return Err(ModelError::InvalidArgument("no volumes to build a tree from".into()));
    }
    if opts.n_rays == 0 {
        return Err(ModelError::InvalidArgument("n_rays must be at least 1".into()));
    }
    par::try_map(volumes, |v| v.validate())?;
    let site = volumes[0].site.clone();
    if let Some(v) = volumes.iter().find(|v| !v.site.same_as(&site)) {
        return Err(ModelError::SiteMismatch { expected: site.to_string(), found: v.site.to_string() });
    }

    let mut by_vcp: BTreeMap<&str, Vec<&VolumeScan>> = BTreeMap::new();
    for v in volumes {
        by_vcp.entry(v.vcp_name.as_str()).or_default().push(v);
    }

    let mut groups = BTreeMap::new();
    for (vcp, mut members) in by_vcp {
        members.sort_by_key(|v| v.volume_time);
        if let Some(w) = members.windows(2).find(|w| w[0].volume_time == w[1].volume_time) {
            return Err(ModelError::DuplicateTime { vcp: vcp.into(), time: w[0].volume_time });
        }
        let n_sweeps = members[0].sweeps.len();
        if let Some(v) = members.iter().find(|v| v.sweeps.len() != n_sweeps) {
            return Err(ModelError::GeometryConflict {
                vcp: vcp.into(),
                sweep: n_sweeps.min(v.sweeps.len()),
                detail: format!("{} sweeps, group has {}", v.sweeps.len(), n_sweeps),
            });
        }
        let sweeps = (0..n_sweeps)
            .map(|k| stack_sweep(vcp, k, &members, opts.n_rays))
            .collect::<Result<Vec<_>, _>>()?;
        let times = members.iter().map(|v| v.volume_time).collect();
        groups.insert(vcp.to_string(), VcpGroup { name: vcp.to_string(), times, sweeps });
    }
    Ok(RadarTree { site: Some(site), groups })
}

fn stack_sweep(vcp: &str, k: usize, members: &[&VolumeScan], n_rays: usize) -> Result<SweepGroup, ModelError> {
    let mut group = SweepGroup::empty(&members[0].sweeps[k], n_rays);
    for v in members {
        group.check_range(vcp, k, &v.sweeps[k])?;
    }
    let kinds: BTreeSet<MomentKind> = members.iter().flat_map(|v| v.sweeps[k].moments.keys().copied()).collect();
    let n_times = members.len();
    let n_gates = group.n_gates();
    let slab = n_rays * n_gates;

    // One canonicalization per volume; each fills its own time slab.
    let canonical = par::try_map(members, |v| {
        let c = canonicalize_azimuths(&v.sweeps[k], n_rays)?;
        Ok::<_, ModelError>(c)
    })?;
    for kind in kinds {
        let mut data = vec![f32::NAN; n_times * slab];
        par::for_each_mut(&mut data.chunks_mut(slab).collect::<Vec<_>>(), |t, out| {
            if let Some(src) = canonical[t].moments.get(&kind) {
                out.copy_from_slice(src.as_standard_layout().as_slice().expect("standard layout"));
            }
        });
        let arr = Array3::from_shape_vec((n_times, n_rays, n_gates), data).expect("shape matches buffer");
        group.moments.insert(kind, arr);
    }
    let mut ray_times = Array2::zeros((n_times, n_rays));
    for (t, c) in canonical.iter().enumerate() {
        for (r, rt) in c.geometry.ray_times.iter().enumerate() {
            ray_times[[t, r]] = rt.0;
        }
    }
    group.ray_times = ray_times;
    group.elevation_deg = canonical.iter().map(|c| c.geometry.elevation_deg).collect();
    Ok(group)
}

impl BitwiseEq for SweepGroup {
    fn bitwise_eq(&self, o: &Self) -> bool {
        self.azimuth_deg.bitwise_eq(&o.azimuth_deg)
            && self.range_start_m.bitwise_eq(&o.range_start_m)
            && self.range_step_m.bitwise_eq(&o.range_step_m)
            && self.range_m.bitwise_eq(&o.range_m)
            && self.elevation_deg.bitwise_eq(&o.elevation_deg)
            && self.ray_times == o.ray_times
            && self.moments.len() == o.moments.len()
            && self
                .moments
                .iter()
                .zip(&o.moments)
                .all(|((ka, a), (kb, b))| ka == kb && a.bitwise_eq(b))
    }
}

impl BitwiseEq for VcpGroup {
    fn bitwise_eq(&self, o: &Self) -> bool {
        self.name == o.name && self.times == o.times && self.sweeps.bitwise_eq(&o.sweeps)
    }
}

impl BitwiseEq for RadarTree {
    fn bitwise_eq(&self, o: &Self) -> bool {
        let site_eq = match (&self.site, &o.site) {
            (Some(a), Some(b)) => a.same_as(b),
            (None, None) => true,
            _ => false,
        };
        site_eq
            && self.groups.len() == o.groups.len()
            && self.groups.iter().zip(&o.groups).all(|((ka, a), (kb, b))| ka == kb && a.bitwise_eq(b))
    }
}
