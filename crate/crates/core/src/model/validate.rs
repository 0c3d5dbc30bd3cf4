use std::fmt;

use super::path::sweep_name;
use super::{validate_name, RadarTree};

/// One broken structural invariant, located by path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Check every tree invariant; an empty list means the tree is well formed.
pub fn validate_structure(tree: &RadarTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |path: String, message: String| out.push(Violation { path, message });

    if !tree.groups.is_empty() && tree.site.is_none() {
        push(String::new(), "tree has groups but no site".into());
    }
    for (key, g) in &tree.groups {
        if let Err(e) = validate_name(key) {
            push(key.clone(), e);
        }
        if &g.name != key {
            push(key.clone(), format!("group name {:?} differs from its key", g.name));
        }
        if g.times.windows(2).any(|w| w[1] <= w[0]) {
            push(format!("{key}/time"), "time coordinate is not strictly increasing".into());
        }
        let n_times = g.times.len();
        for (k, s) in g.sweeps.iter().enumerate() {
            let sp = format!("{key}/{}", sweep_name(k));
            let n_rays = s.n_rays();
            let n_gates = s.n_gates();
            if s.azimuth_deg.iter().any(|a| !(0.0..360.0).contains(a)) || s.azimuth_deg.windows(2).any(|w| w[1] <= w[0]) {
                push(format!("{sp}/azimuth"), "azimuths must be strictly increasing within [0, 360)".into());
            }
            if !(s.range_step_m > 0.0) {
                push(format!("{sp}/range"), format!("range step {} must be positive", s.range_step_m));
            }
            if n_gates == 0 || s.range_m != super::range_axis(s.range_start_m, s.range_step_m, n_gates) {
                push(format!("{sp}/range"), "range coordinate inconsistent with start/step".into());
            }
            if s.elevation_deg.len() != n_times {
                push(
                    format!("{sp}/elevation"),
                    format!("length {} does not match time length {n_times}", s.elevation_deg.len()),
                );
            }
            if s.ray_times.dim() != (n_times, n_rays) {
                push(format!("{sp}/ray_time"), format!("shape {:?} expected ({n_times}, {n_rays})", s.ray_times.dim()));
            }
            for (kind, arr) in &s.moments {
                if arr.dim() != (n_times, n_rays, n_gates) {
                    push(
                        format!("{sp}/{kind}"),
                        format!("shape {:?} expected ({n_times}, {n_rays}, {n_gates})", arr.dim()),
                    );
                } else if let Some(v) = arr.iter().find(|v| !kind.check_value(**v)) {
                    push(format!("{sp}/{kind}"), format!("value {v} out of range"));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_tree, fixtures::volume, MomentKind};
    use crate::time::Timestamp;
    use ndarray::Array3;

    #[test]
    fn built_tree_is_valid() {
        let vols: Vec<_> = (0..3).map(|i| volume("VCP-212", i * 300, 2, 360, 4)).collect();
        assert!(validate_structure(&build_tree(&vols).unwrap()).is_empty());
    }

    #[test]
    fn decreasing_time_is_reported() {
        let vols: Vec<_> = (0..3).map(|i| volume("VCP-212", i * 300, 1, 360, 4)).collect();
        let mut tree = build_tree(&vols).unwrap();
        tree.groups.get_mut("VCP-212").unwrap().times[2] = Timestamp::from_seconds(-5);
        let v = validate_structure(&tree);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "VCP-212/time");
    }

    #[test]
    fn bad_moment_shape_is_reported() {
        let mut tree = build_tree(&[volume("VCP-212", 0, 1, 360, 4)]).unwrap();
        let sg = &mut tree.groups.get_mut("VCP-212").unwrap().sweeps[0];
        sg.moments.insert(MomentKind::Zdr, Array3::zeros((1, 360, 5)));
        let v = validate_structure(&tree);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "VCP-212/sweep_0/ZDR");
    }
}
