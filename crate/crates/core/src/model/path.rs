use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3};

use super::{ModelError, MomentKind, RadarTree, SweepGroup, VcpGroup};
use crate::time::Timestamp;

/// Slash-separated node address, e.g. `VCP-212/sweep_0/DBZH`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreePath {
    segments: Vec<String>,
}

impl TreePath {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        if text.is_empty() {
            return Err(ModelError::InvalidPath(text.into()));
        }
        let segments: Vec<String> = text.split('/').map(str::to_string).collect();
        if segments.iter().any(String::is_empty) {
            return Err(ModelError::InvalidPath(text.into()));
        }
        Ok(TreePath { segments })
    }

    pub fn from_segments<I, S>(segments: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() || segments.iter().any(|s| s.is_empty() || s.contains('/')) {
            return Err(ModelError::InvalidPath(segments.join("/")));
        }
        Ok(TreePath { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn join(&self, segment: &str) -> Result<Self, ModelError> {
        let mut segments = self.segments.clone();
        segments.push(segment.to_string());
        Self::from_segments(segments)
    }

    pub fn parent(&self) -> Option<TreePath> {
        (self.segments.len() > 1).then(|| TreePath { segments: self.segments[..self.segments.len() - 1].to_vec() })
    }

    pub fn name(&self) -> &str {
        self.segments.last().expect("paths are nonempty")
    }
}

impl fmt::Display for TreePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join("/"))
    }
}

impl FromStr for TreePath {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, ModelError> {
        TreePath::parse(s)
    }
}

/// Sweep group name for index `k`.
pub fn sweep_name(k: usize) -> String {
    format!("sweep_{k}")
}

pub(crate) fn parse_sweep_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("sweep_")?;
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    digits.parse().ok()
}

/// A node reached by [`resolve_path`].
#[derive(Debug, Clone, Copy)]
pub enum Node<'a> {
    Vcp(&'a VcpGroup),
    Sweep(&'a SweepGroup),
    /// `<vcp>/time`
    Time(&'a [Timestamp]),
    /// `azimuth`, `range` or `elevation` coordinate of a sweep group.
    Coordinate(&'a [f32]),
    RayTimes(&'a Array2<i64>),
    Moment(MomentKind, &'a Array3<f32>),
}

impl Node<'_> {
    pub fn is_group(&self) -> bool {
        matches!(self, Node::Vcp(_) | Node::Sweep(_))
    }
}

/// Exact-match lookup, one segment at a time.
pub fn resolve_path<'a>(tree: &'a RadarTree, path: &TreePath) -> Result<Node<'a>, ModelError> {
    let segs = path.segments();
    let not_found = |depth: usize| ModelError::NotFound {
        path: path.to_string(),
        resolved_prefix: segs[..depth].join("/"),
    };
    let group = tree.groups.get(&segs[0]).ok_or_else(|| not_found(0))?;
    let Some(second) = segs.get(1) else {
        return Ok(Node::Vcp(group));
    };
    let node = if second == "time" {
        Node::Time(&group.times)
    } else {
        let k = parse_sweep_name(second).ok_or_else(|| not_found(1))?;
        let sweep = group.sweeps.get(k).ok_or_else(|| not_found(1))?;
        match segs.get(2).map(String::as_str) {
            None => Node::Sweep(sweep),
            Some("azimuth") => Node::Coordinate(&sweep.azimuth_deg),
            Some("range") => Node::Coordinate(&sweep.range_m),
            Some("elevation") => Node::Coordinate(&sweep.elevation_deg),
            Some("ray_time") => Node::RayTimes(&sweep.ray_times),
            Some(code) => {
                let kind = MomentKind::from_code(code).ok_or_else(|| not_found(2))?;
                let arr = sweep.moments.get(&kind).ok_or_else(|| not_found(2))?;
                Node::Moment(kind, arr)
            }
        }
    };
    let leaf_depth = if matches!(node, Node::Sweep(_)) { 2 } else if second == "time" { 2 } else { 3 };
    if segs.len() > leaf_depth {
        return Err(not_found(leaf_depth));
    }
    Ok(node)
}

impl RadarTree {
    /// Every resolvable path, groups before their children.
    pub fn paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, g) in &self.groups {
            out.push(name.clone());
            out.push(format!("{name}/time"));
            for (k, s) in g.sweeps.iter().enumerate() {
                let sp = format!("{name}/{}", sweep_name(k));
                out.push(sp.clone());
                for leaf in ["azimuth", "range", "elevation", "ray_time"] {
                    out.push(format!("{sp}/{leaf}"));
                }
                for kind in s.moments.keys() {
                    out.push(format!("{sp}/{kind}"));
                }
            }
        }
        out
    }
}
