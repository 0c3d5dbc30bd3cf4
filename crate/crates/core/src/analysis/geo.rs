use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};
use crate::model::{Site, SweepGroup};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// 4/3 effective earth radius for standard refraction.
pub const EFFECTIVE_EARTH_RADIUS_M: f64 = 4.0 / 3.0 * EARTH_RADIUS_M;

/// Beam centre height above sea level under the 4/3 earth model.
pub fn beam_height(range_m: f64, elevation_deg: f64, site_altitude_m: f64) -> Result<f64> {
    if !(range_m >= 0.0) {
        return Err(AnalysisError::InvalidArgument(format!("slant range {range_m} must be nonnegative")));
    }
    if elevation_deg == 90.0 {
        return Ok(site_altitude_m + range_m);
    }
    let re = EFFECTIVE_EARTH_RADIUS_M;
    let s = elevation_deg.to_radians().sin();
    // sqrt(r^2 + Re^2 + 2 r Re sin e) - Re, rearranged to avoid cancellation.
    let num = range_m * (range_m + 2.0 * re * s);
    Ok(num / ((range_m * range_m + re * re + 2.0 * range_m * re * s).sqrt() + re) + site_altitude_m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: Option<f64>,
}

impl GeoPoint {
    /// Validates latitude and normalizes longitude to `[-180, 180)`.
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        if !(latitude_deg.abs() <= 90.0) || !longitude_deg.is_finite() {
            return Err(AnalysisError::InvalidArgument(format!("invalid location ({latitude_deg}, {longitude_deg})")));
        }
        let lon = (longitude_deg + 180.0).rem_euclid(360.0) - 180.0;
        Ok(GeoPoint { latitude_deg, longitude_deg: if lon >= 180.0 { -180.0 } else { lon }, altitude_m: None })
    }

    pub fn of_site(site: &Site) -> Self {
        GeoPoint { latitude_deg: site.latitude_deg, longitude_deg: site.longitude_deg, altitude_m: Some(site.altitude_m as f64) }
    }
}

/// Haversine distance on a sphere of radius [`EARTH_RADIUS_M`].
pub fn great_circle_m(from: &GeoPoint, to: &GeoPoint) -> f64 {
    let (p1, p2) = (from.latitude_deg.to_radians(), to.latitude_deg.to_radians());
    let dp = p2 - p1;
    let dl = (to.longitude_deg - from.longitude_deg).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial bearing in degrees clockwise from north, `[0, 360)`.
pub fn bearing_deg(from: &GeoPoint, to: &GeoPoint) -> f64 {
    let (p1, p2) = (from.latitude_deg.to_radians(), to.latitude_deg.to_radians());
    let dl = (to.longitude_deg - from.longitude_deg).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let b = y.atan2(x).to_degrees().rem_euclid(360.0);
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

/// Slant range reaching `ground_m` of surface distance at `elevation_deg`
/// under the 4/3 earth model; infinite when the beam never gets there.
pub fn slant_range_m(ground_m: f64, elevation_deg: f64) -> f64 {
    let theta = ground_m / EFFECTIVE_EARTH_RADIUS_M;
    let c = (elevation_deg.to_radians() + theta).cos();
    if c <= 0.0 {
        return f64::INFINITY;
    }
    EFFECTIVE_EARTH_RADIUS_M * theta.sin() / c
}

/// Polar axes of one sweep group.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxes {
    pub azimuth_deg: Vec<f32>,
    pub range_start_m: f64,
    pub range_step_m: f64,
    pub n_gates: usize,
    pub elevation_deg: f64,
}

impl SweepAxes {
    /// Axes of a sweep group, at the median of its measured elevations.
    pub fn of_group(g: &SweepGroup) -> Self {
        SweepAxes {
            azimuth_deg: g.azimuth_deg.clone(),
            range_start_m: g.range_start_m as f64,
            range_step_m: g.range_step_m as f64,
            n_gates: g.n_gates(),
            elevation_deg: super::median(&g.elevation_deg),
        }
    }

    pub fn max_range_m(&self) -> f64 {
        self.range_start_m + self.n_gates as f64 * self.range_step_m
    }
}

/// Nearest gate to a target location.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatePointer {
    pub sweep: usize,
    pub ray: usize,
    pub gate: usize,
    pub slant_range_m: f64,
    pub bearing_deg: f64,
    pub beam_height_m: f64,
}

/// Nearest ray by circular azimuth distance (lowest index on ties).
fn nearest_ray(azimuths: &[f32], bearing: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, &a) in azimuths.iter().enumerate() {
        let d = (a as f64 - bearing).rem_euclid(360.0);
        let d = d.min(360.0 - d);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Locate the gate nearest `target`. Range is measured along the beam at the
/// sweep's elevation; the target's altitude is not used.
pub fn locate_gate(site: &Site, axes: &SweepAxes, sweep: usize, target: &GeoPoint) -> Result<GatePointer> {
    if axes.azimuth_deg.is_empty() || axes.n_gates == 0 || !(axes.range_step_m > 0.0) {
        return Err(AnalysisError::InvalidArgument("sweep has no gates".into()));
    }
    let origin = GeoPoint::of_site(site);
    let ground = great_circle_m(&origin, target);
    let bearing = bearing_deg(&origin, target);
    let slant = slant_range_m(ground, axes.elevation_deg);
    let max = axes.max_range_m();
    if !(slant <= max) {
        return Err(AnalysisError::OutOfCoverage { distance_m: ground, slant_m: slant, max_m: max });
    }
    let gate = ((slant - axes.range_start_m) / axes.range_step_m).round().max(0.0) as usize;
    let gate = gate.min(axes.n_gates - 1);
    Ok(GatePointer {
        sweep,
        ray: nearest_ray(&axes.azimuth_deg, bearing),
        gate,
        slant_range_m: slant,
        bearing_deg: bearing,
        beam_height_m: beam_height(slant, axes.elevation_deg, site.altitude_m as f64)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_azimuths;
    use proptest::prelude::*;

    fn site() -> Site {
        Site { id: "KVNX".into(), latitude_deg: 36.7406, longitude_deg: -98.1279, altitude_m: 378.0 }
    }

    fn axes() -> SweepAxes {
        SweepAxes { azimuth_deg: canonical_azimuths(360), range_start_m: 125.0, range_step_m: 250.0, n_gates: 500, elevation_deg: 0.5 }
    }

    #[test]
    fn beam_height_points() {
        assert_eq!(beam_height(0.0, 0.5, 378.0).unwrap(), 378.0);
        assert_eq!(beam_height(10_000.0, 90.0, 12.5).unwrap(), 10_012.5);
        // Textbook form evaluated directly; cancellation error is ~1e-9 m here.
        let re = EFFECTIVE_EARTH_RADIUS_M;
        let (r, e) = (100_000.0f64, 0.5f64.to_radians());
        let naive = (r * r + re * re + 2.0 * r * re * e.sin()).sqrt() - re;
        let h = beam_height(r, 0.5, 0.0).unwrap();
        assert!((h - naive).abs() < 1e-6, "{h} vs {naive}");
        assert!((h - 1461.0).abs() < 1.0, "{h}");
        assert!(beam_height(-1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn target_at_site() {
        let g = locate_gate(&site(), &axes(), 0, &GeoPoint::of_site(&site())).unwrap();
        assert_eq!(g.gate, 0);
        assert!(g.slant_range_m < 250.0);
    }

    /// Point `ground_m` along a great circle from the site at `bearing`.
    fn destination(ground_m: f64, bearing: f64) -> GeoPoint {
        let s = site();
        let (p1, l1) = (s.latitude_deg.to_radians(), s.longitude_deg.to_radians());
        let d = ground_m / EARTH_RADIUS_M;
        let b = bearing.to_radians();
        let p2 = (p1.sin() * d.cos() + p1.cos() * d.sin() * b.cos()).asin();
        let l2 = l1 + (b.sin() * d.sin() * p1.cos()).atan2(d.cos() - p1.sin() * p2.sin());
        GeoPoint::new(p2.to_degrees(), l2.to_degrees()).unwrap()
    }

    /// Ground distance of a point on the beam at slant range `r`.
    fn ground_of_slant(r: f64, elev_deg: f64) -> f64 {
        let re = EFFECTIVE_EARTH_RADIUS_M;
        let e = elev_deg.to_radians();
        let h = (r * r + re * re + 2.0 * r * re * e.sin()).sqrt() - re;
        re * (r * e.cos() / (re + h)).asin()
    }

    /// Exhaustive nearest (ray, gate) in polar distance.
    fn brute_force(a: &SweepAxes, bearing: f64, slant: f64) -> (usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        for (i, &az) in a.azimuth_deg.iter().enumerate() {
            let mut d = (az as f64 - bearing).abs() % 360.0;
            if d > 180.0 {
                d = 360.0 - d;
            }
            for k in 0..a.n_gates {
                let rg = a.range_start_m + k as f64 * a.range_step_m;
                let cost = d * 1e9 + (rg - slant).abs();
                if cost < best.0 {
                    best = (cost, i, k);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn due_north_hundredth_gate() {
        let a = axes();
        let r100 = a.range_start_m + 100.0 * a.range_step_m;
        let target = destination(ground_of_slant(r100, a.elevation_deg), 0.0);
        let g = locate_gate(&site(), &a, 0, &target).unwrap();
        assert_eq!(g.ray, 0);
        assert!(g.gate.abs_diff(100) <= 1, "{}", g.gate);
        assert_eq!((g.ray, g.gate), brute_force(&a, g.bearing_deg, g.slant_range_m));
    }

    #[test]
    fn far_target_out_of_coverage() {
        let t = destination(1_000_000.0, 45.0);
        assert!(matches!(locate_gate(&site(), &axes(), 0, &t), Err(AnalysisError::OutOfCoverage { .. })));
    }

    #[test]
    fn longitude_normalized() {
        assert_eq!(GeoPoint::new(10.0, 190.0).unwrap().longitude_deg, -170.0);
        assert_eq!(GeoPoint::new(10.0, 180.0).unwrap().longitude_deg, -180.0);
        assert!(GeoPoint::new(91.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn beam_height_monotone(r in 0.0f64..300_000.0, dr in 1e-3f64..1000.0, e in 0.0f64..89.9, h0 in -100.0f64..3000.0) {
            prop_assert!(beam_height(r + dr, e, h0).unwrap() > beam_height(r, e, h0).unwrap());
        }

        #[test]
        fn vertical_beam_is_exact(r in 0.0f64..1e6, h0 in -500.0f64..5000.0) {
            prop_assert_eq!(beam_height(r, 90.0, h0).unwrap(), h0 + r);
        }

        #[test]
        fn locate_matches_brute_force(ground in 0.0f64..120_000.0, bearing in 0.0f64..360.0) {
            let a = axes();
            let t = destination(ground, bearing);
            let g = locate_gate(&site(), &a, 0, &t).unwrap();
            prop_assert!((g.bearing_deg - bearing).abs() < 1e-6 || (360.0 - (g.bearing_deg - bearing).abs()) < 1e-6);
            prop_assert_eq!((g.ray, g.gate), brute_force(&a, g.bearing_deg, g.slant_range_m));
        }
    }
}
