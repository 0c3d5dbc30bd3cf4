use ndarray::Array2;

use super::{ModelError, Sweep, SweepGeometry};
use crate::time::Timestamp;

/// Ray centres of the canonical grid: `(i + 0.5) * 360 / n_rays` degrees.
pub fn canonical_azimuths(n_rays: usize) -> Vec<f32> {
    let width = 360.0 / n_rays as f64;
    (0..n_rays).map(|i| ((i as f64 + 0.5) * width) as f32).collect()
}

/// Re-grid a sweep onto `n_rays` equally spaced rays.
///
/// Canonical ray `i` covers the half-open sector `[i*w, (i+1)*w)` with
/// `w = 360 / n_rays`. It copies the measured ray inside that sector whose
/// azimuth is closest to the sector centre (lowest index on ties); sectors
/// without a measured ray are NaN with a [`Timestamp::NAT`] ray time. Values
/// are copied, never interpolated.
pub fn canonicalize_azimuths(sweep: &Sweep, n_rays: usize) -> Result<Sweep, ModelError> {
    if n_rays == 0 {
        return Err(ModelError::InvalidArgument("n_rays must be at least 1".into()));
    }
    let geom = &sweep.geometry;
    let width = 360.0 / n_rays as f64;
    let mut chosen: Vec<Option<(usize, f64)>> = vec![None; n_rays];
    for (j, &az) in geom.azimuth_deg.iter().enumerate() {
        let a = az as f64;
        if !(0.0..360.0).contains(&a) {
            return Err(ModelError::InvalidSweep(format!("azimuth {az} outside [0, 360)")));
        }
        let bin = ((a / width).floor() as usize).min(n_rays - 1);
        let centre = (bin as f64 + 0.5) * width;
        let dist = (a - centre).abs();
        match chosen[bin] {
            Some((_, best)) if best <= dist => {}
            _ => chosen[bin] = Some((j, dist)),
        }
    }

    let n_gates = geom.n_gates;
    let moments = sweep
        .moments
        .iter()
        .map(|(&kind, src)| {
            let mut out = Array2::from_elem((n_rays, n_gates), f32::NAN);
            for (i, c) in chosen.iter().enumerate() {
                if let Some((j, _)) = c {
                    out.row_mut(i).assign(&src.row(*j));
                }
            }
            (kind, out)
        })
        .collect();
    let ray_times = chosen
        .iter()
        .map(|c| c.map_or(Timestamp::NAT, |(j, _)| geom.ray_times[j]))
        .collect();

    Ok(Sweep {
        geometry: SweepGeometry {
            elevation_deg: geom.elevation_deg,
            azimuth_deg: canonical_azimuths(n_rays),
            range_start_m: geom.range_start_m,
            range_step_m: geom.range_step_m,
            n_gates,
            ray_times,
        },
        moments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, BitwiseEq, MomentKind};
    use std::collections::BTreeMap;

    fn sweep_with_rays(azimuths: &[f32]) -> Sweep {
        let n = azimuths.len();
        Sweep {
            geometry: SweepGeometry {
                elevation_deg: 0.5,
                azimuth_deg: azimuths.to_vec(),
                range_start_m: 0.0,
                range_step_m: 100.0,
                n_gates: 2,
                ray_times: (0..n).map(|i| Timestamp(i as i64)).collect(),
            },
            moments: BTreeMap::from([(
                MomentKind::Dbzh,
                Array2::from_shape_fn((n, 2), |(r, g)| (r * 10 + g) as f32),
            )]),
        }
    }

    #[test]
    fn idempotent_on_canonical_grid() {
        let s = fixtures::sweep(360, 5, Timestamp(0), |r, g| (r + g) as f32);
        let c = canonicalize_azimuths(&s, 360).unwrap();
        assert!(c.bitwise_eq(&s));
        assert!(canonicalize_azimuths(&c, 360).unwrap().bitwise_eq(&c));
    }

    #[test]
    fn nearest_ray_assignment() {
        let s = sweep_with_rays(&[0.4, 1.6]);
        let c = canonicalize_azimuths(&s, 360).unwrap();
        let dbz = &c.moments[&MomentKind::Dbzh];
        assert_eq!(dbz.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(dbz.row(1).to_vec(), vec![10.0, 11.0]);
        assert!(dbz.row(2).iter().all(|v| v.is_nan()));
        assert_eq!(c.geometry.ray_times[1], Timestamp(1));
        assert_eq!(c.geometry.ray_times[2], Timestamp::NAT);
    }

    #[test]
    fn single_ray_fills_one_slot() {
        let s = sweep_with_rays(&[10.0]);
        let c = canonicalize_azimuths(&s, 360).unwrap();
        let dbz = &c.moments[&MomentKind::Dbzh];
        let filled: Vec<usize> = (0..360).filter(|&i| dbz[[i, 0]].is_finite()).collect();
        assert_eq!(filled, vec![10]);
        assert_eq!(c.geometry.azimuth_deg[10], 10.5);
    }

    #[test]
    fn closest_ray_wins_within_sector() {
        let s = sweep_with_rays(&[5.1, 5.45, 5.9]);
        let c = canonicalize_azimuths(&s, 360).unwrap();
        assert_eq!(c.moments[&MomentKind::Dbzh][[5, 0]], 10.0);
    }

    #[test]
    fn zero_rays_rejected() {
        let s = sweep_with_rays(&[1.0]);
        assert!(matches!(canonicalize_azimuths(&s, 0), Err(ModelError::InvalidArgument(_))));
    }
}
