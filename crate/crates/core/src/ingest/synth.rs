//! Deterministic synthetic volume generator.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)` and switched to stream `i` for volume `i`. The stream
//! is portable across platforms, so equal configs give bit-identical volumes
//! regardless of machine or thread count.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{range_axis, MomentKind, Site, Sweep, SweepGeometry, VolumeScan};
use crate::par;
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Scan strategy: elevation list, sweep grid and repeat interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VcpDefinition {
    pub name: String,
    pub elevations_deg: Vec<f32>,
    pub n_rays: usize,
    pub n_gates: usize,
    pub range_start_m: f32,
    pub range_step_m: f32,
    pub revisit_seconds: u32,
}

// Test fixtures only; these are plausible values, not the operational tables.
const FOURTEEN_TILTS: [f32; 14] = [0.5, 0.9, 1.3, 1.8, 2.4, 3.1, 4.0, 5.1, 6.4, 8.0, 10.0, 12.5, 15.6, 19.5];

impl VcpDefinition {
    pub fn vcp12() -> Self {
        VcpDefinition {
            name: "VCP-12".into(),
            elevations_deg: FOURTEEN_TILTS.to_vec(),
            n_rays: 360,
            n_gates: 500,
            range_start_m: 125.0,
            range_step_m: 250.0,
            revisit_seconds: 270,
        }
    }

    pub fn vcp212() -> Self {
        VcpDefinition { name: "VCP-212".into(), revisit_seconds: 300, ..Self::vcp12() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "VCP-12" => Some(Self::vcp12()),
            "VCP-212" => Some(Self::vcp212()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.into()));
        if self.elevations_deg.is_empty() {
            return bad("elevation list is empty");
        }
        if self.n_rays == 0 || self.n_rays > u16::MAX as usize || self.n_gates == 0 || self.n_gates > u16::MAX as usize {
            return bad("n_rays and n_gates must be in 1..=65535");
        }
        if !(self.range_step_m > 0.0) || self.range_start_m < 0.0 {
            return bad("range grid must have positive step and nonnegative start");
        }
        if self.revisit_seconds == 0 {
            return bad("revisit_seconds must be positive");
        }
        crate::model::validate_name(&self.name).map_err(SynthError::Invalid)
    }
}

/// Reflectivity field model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldModel {
    /// The same dBZ everywhere.
    Constant { value: f32 },
    /// `peak * exp(-d^2 / (2 sigma^2))` around a centre moving with the advection wind.
    GaussianStorm {
        /// Centre east of the radar at the first volume, m.
        center_x_m: f64,
        /// Centre north of the radar at the first volume, m.
        center_y_m: f64,
        sigma_m: f64,
        peak_dbz: f32,
        #[serde(default)]
        advection_u_ms: f64,
        #[serde(default)]
        advection_v_ms: f64,
    },
    /// Independent normal samples per gate.
    Noise { mean: f32, stddev: f32 },
}

impl FieldModel {
    fn validate(&self) -> Result<(), SynthError> {
        match self {
            FieldModel::Constant { value } if !value.is_finite() => Err(SynthError::Invalid("constant value must be finite".into())),
            FieldModel::GaussianStorm { sigma_m, .. } if !(*sigma_m > 0.0) => Err(SynthError::Invalid("sigma_m must be positive".into())),
            FieldModel::Noise { stddev, .. } if !(*stddev >= 0.0) => Err(SynthError::Invalid("stddev must be nonnegative".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub vcp: VcpDefinition,
    pub n_volumes: usize,
    pub start_time: Timestamp,
    pub seed: u64,
    pub field: FieldModel,
    /// Moments to emit; DBZH drives the others.
    pub moments: Vec<MomentKind>,
    pub site: Site,
    /// Uniform ray-position jitter, degrees; must stay below half a ray width.
    pub azimuth_jitter_deg: f32,
}

impl SynthConfig {
    pub fn new(vcp: VcpDefinition, n_volumes: usize, field: FieldModel) -> Self {
        SynthConfig {
            vcp,
            n_volumes,
            start_time: Timestamp::parse_rfc3339("2011-05-20T00:00:00Z").expect("literal"),
            seed: 0,
            field,
            moments: vec![MomentKind::Dbzh],
            site: default_site(),
            azimuth_jitter_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.vcp.validate()?;
        self.field.validate()?;
        if self.n_volumes == 0 {
            return Err(SynthError::Invalid("n_volumes must be at least 1".into()));
        }
        if !self.moments.contains(&MomentKind::Dbzh) {
            return Err(SynthError::Invalid("moments must include DBZH".into()));
        }
        let half_width = 180.0 / self.vcp.n_rays as f32;
        if !(0.0..half_width).contains(&self.azimuth_jitter_deg) {
            return Err(SynthError::Invalid(format!("azimuth_jitter_deg must be in [0, {half_width})")));
        }
        if self.site.id.len() > 8 || self.vcp.name.len() > 16 {
            return Err(SynthError::Invalid("site id or vcp name too long for the raw format".into()));
        }
        Ok(())
    }

    /// Parse the key/value (TOML) config document.
    ///
    /// ```toml
    /// seed = 42
    /// n_volumes = 12
    /// start_time = "2011-05-20T00:00:00Z"
    /// moments = ["DBZH", "ZDR"]
    /// azimuth_jitter_deg = 0.1
    ///
    /// [vcp]
    /// preset = "VCP-212"   # VCP-12 or VCP-212; any field below overrides it
    /// n_gates = 100
    ///
    /// [field]
    /// kind = "gaussian_storm"   # constant | gaussian_storm | noise
    /// center_x_m = 20000.0
    /// center_y_m = 35000.0
    /// sigma_m = 8000.0
    /// peak_dbz = 55.0
    ///
    /// [site]
    /// id = "KVNX"
    /// latitude_deg = 36.7406
    /// longitude_deg = -98.1279
    /// altitude_m = 378.0
    /// ```
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let doc: SynthDocument = toml::from_str(text)?;
        doc.into_config()
    }
}

fn default_site() -> Site {
    Site { id: "KVNX".into(), latitude_deg: 36.7406, longitude_deg: -98.1279, altitude_m: 378.0 }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthDocument {
    #[serde(default)]
    seed: u64,
    n_volumes: usize,
    start_time: Option<String>,
    moments: Option<Vec<MomentKind>>,
    #[serde(default)]
    azimuth_jitter_deg: f32,
    #[serde(default)]
    vcp: VcpDocument,
    field: FieldModel,
    site: Option<Site>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VcpDocument {
    preset: Option<String>,
    name: Option<String>,
    elevations_deg: Option<Vec<f32>>,
    n_rays: Option<usize>,
    n_gates: Option<usize>,
    range_start_m: Option<f32>,
    range_step_m: Option<f32>,
    revisit_seconds: Option<u32>,
}

impl SynthDocument {
    fn into_config(self) -> Result<SynthConfig, SynthError> {
        let v = self.vcp;
        let preset = v.preset.as_deref().unwrap_or("VCP-212");
        let mut vcp = VcpDefinition::preset(preset).ok_or_else(|| SynthError::Invalid(format!("unknown vcp preset {preset:?}")))?;
        if let Some(x) = v.name {
            vcp.name = x;
        }
        if let Some(x) = v.elevations_deg {
            vcp.elevations_deg = x;
        }
        if let Some(x) = v.n_rays {
            vcp.n_rays = x;
        }
        if let Some(x) = v.n_gates {
            vcp.n_gates = x;
        }
        if let Some(x) = v.range_start_m {
            vcp.range_start_m = x;
        }
        if let Some(x) = v.range_step_m {
            vcp.range_step_m = x;
        }
        if let Some(x) = v.revisit_seconds {
            vcp.revisit_seconds = x;
        }
        let mut cfg = SynthConfig::new(vcp, self.n_volumes, self.field);
        cfg.seed = self.seed;
        if let Some(t) = self.start_time {
            cfg.start_time = Timestamp::parse_rfc3339(&t).map_err(|e| SynthError::Invalid(format!("start_time: {e}")))?;
        }
        if let Some(m) = self.moments {
            cfg.moments = m;
        }
        if let Some(s) = self.site {
            cfg.site = s;
        }
        cfg.azimuth_jitter_deg = self.azimuth_jitter_deg;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Generate `n_volumes` volumes at `start_time + i * revisit_seconds`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<VolumeScan>, SynthError> {
    cfg.validate()?;
    Ok(par::map_range(cfg.n_volumes, |i| generate_volume(cfg, i)))
}

fn generate_volume(cfg: &SynthConfig, index: usize) -> VolumeScan {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let vcp = &cfg.vcp;
    let elapsed_s = index as f64 * vcp.revisit_seconds as f64;
    let volume_time = cfg.start_time.add_millis(index as i64 * vcp.revisit_seconds as i64 * 1000).expect("time in range");
    let n_sweeps = vcp.elevations_deg.len();
    let sweep_ms = vcp.revisit_seconds as i64 * 1000 / n_sweeps as i64;
    let ray_ms = sweep_ms / vcp.n_rays as i64;
    let width = 360.0 / vcp.n_rays as f64;
    let ranges = range_axis(vcp.range_start_m, vcp.range_step_m, vcp.n_gates);

    let sweeps = vcp
        .elevations_deg
        .iter()
        .enumerate()
        .map(|(k, &elevation_deg)| {
            let first_ray = rng.gen_range(0..vcp.n_rays);
            let mut azimuth_deg = Vec::with_capacity(vcp.n_rays);
            let mut ray_times = Vec::with_capacity(vcp.n_rays);
            for step in 0..vcp.n_rays {
                let j = (first_ray + step) % vcp.n_rays;
                let jitter = if cfg.azimuth_jitter_deg > 0.0 {
                    rng.gen_range(-cfg.azimuth_jitter_deg..cfg.azimuth_jitter_deg) as f64
                } else {
                    0.0
                };
                let az = (((j as f64 + 0.5) * width + jitter) as f32).rem_euclid(360.0);
                azimuth_deg.push(if az >= 360.0 { 0.0 } else { az });
                let t = volume_time.add_millis(k as i64 * sweep_ms + step as i64 * ray_ms).expect("time in range");
                ray_times.push(t);
            }
            let dbz = reflectivity(cfg, &mut rng, elapsed_s, elevation_deg, &azimuth_deg, &ranges);
            let mut moments = BTreeMap::new();
            for &kind in &cfg.moments {
                let arr = match kind {
                    MomentKind::Dbzh => continue,
                    MomentKind::Vradh => radial_velocity(&cfg.field, &azimuth_deg, vcp.n_gates),
                    MomentKind::Zdr => dbz.mapv(|z| (0.05 * (z - 10.0)).clamp(-1.0, 4.0)),
                    MomentKind::Rhohv => dbz.mapv(|z| if z.is_nan() { f32::NAN } else { 0.99 }),
                    MomentKind::Phidp => Array2::from_shape_fn(dbz.dim(), |(_, g)| (0.02 * g as f32).rem_euclid(360.0)),
                };
                moments.insert(kind, arr);
            }
            moments.insert(MomentKind::Dbzh, dbz);
            Sweep {
                geometry: SweepGeometry {
                    elevation_deg,
                    azimuth_deg,
                    range_start_m: vcp.range_start_m,
                    range_step_m: vcp.range_step_m,
                    n_gates: vcp.n_gates,
                    ray_times,
                },
                moments,
            }
        })
        .collect();

    VolumeScan { vcp_name: vcp.name.clone(), volume_time, site: cfg.site.clone(), sweeps }
}

/// Ground-plane position of a gate relative to the radar (east, north), m.
pub(crate) fn gate_xy(range_m: f32, azimuth_deg: f32, elevation_deg: f32) -> (f64, f64) {
    let ground = range_m as f64 * (elevation_deg as f64).to_radians().cos();
    let az = (azimuth_deg as f64).to_radians();
    (ground * az.sin(), ground * az.cos())
}

fn reflectivity(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    elapsed_s: f64,
    elevation_deg: f32,
    azimuths: &[f32],
    ranges: &[f32],
) -> Array2<f32> {
    let shape = (azimuths.len(), ranges.len());
    match &cfg.field {
        FieldModel::Constant { value } => Array2::from_elem(shape, *value),
        FieldModel::GaussianStorm { center_x_m, center_y_m, sigma_m, peak_dbz, advection_u_ms, advection_v_ms } => {
            let cx = center_x_m + advection_u_ms * elapsed_s;
            let cy = center_y_m + advection_v_ms * elapsed_s;
            let denom = 2.0 * sigma_m * sigma_m;
            Array2::from_shape_fn(shape, |(r, g)| {
                let (x, y) = gate_xy(ranges[g], azimuths[r], elevation_deg);
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                (*peak_dbz as f64 * (-d2 / denom).exp()) as f32
            })
        }
        FieldModel::Noise { mean, stddev } => {
            let normal = Normal::new(*mean as f64, *stddev as f64).expect("validated stddev");
            let values = (0..shape.0 * shape.1).map(|_| normal.sample(rng) as f32).collect();
            Array2::from_shape_vec(shape, values).expect("shape matches")
        }
    }
}

fn radial_velocity(field: &FieldModel, azimuths: &[f32], n_gates: usize) -> Array2<f32> {
    let (u, v) = match field {
        FieldModel::GaussianStorm { advection_u_ms, advection_v_ms, .. } => (*advection_u_ms, *advection_v_ms),
        _ => (0.0, 0.0),
    };
    Array2::from_shape_fn((azimuths.len(), n_gates), |(r, _)| {
        let az = (azimuths[r] as f64).to_radians();
        (u * az.sin() + v * az.cos()) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BitwiseEq;

    fn small_vcp() -> VcpDefinition {
        VcpDefinition { n_gates: 60, elevations_deg: vec![0.5, 1.5], ..VcpDefinition::vcp212() }
    }

    #[test]
    fn constant_field_everywhere() {
        let cfg = SynthConfig::new(small_vcp(), 1, FieldModel::Constant { value: 30.0 });
        let vols = generate_synthetic(&cfg).unwrap();
        assert_eq!(vols.len(), 1);
        for s in &vols[0].sweeps {
            assert!(s.moments[&MomentKind::Dbzh].iter().all(|v| *v == 30.0));
        }
        assert!(vols[0].validate().is_ok());
    }

    #[test]
    fn deterministic_in_config_and_seed() {
        let mut cfg = SynthConfig::new(small_vcp(), 3, FieldModel::Noise { mean: 20.0, stddev: 5.0 });
        cfg.seed = 99;
        cfg.azimuth_jitter_deg = 0.2;
        cfg.moments = MomentKind::ALL.to_vec();
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert!(a.bitwise_eq(&b));
        cfg.seed = 100;
        assert!(!generate_synthetic(&cfg).unwrap().bitwise_eq(&a));
        for v in &a {
            v.validate().unwrap();
        }
    }

    #[test]
    fn volume_times_follow_revisit() {
        let cfg = SynthConfig::new(small_vcp(), 4, FieldModel::Constant { value: 1.0 });
        let vols = generate_synthetic(&cfg).unwrap();
        for (i, v) in vols.iter().enumerate() {
            assert_eq!(v.volume_time.seconds_since(cfg.start_time), 300.0 * i as f64);
        }
    }

    #[test]
    fn storm_peak_at_nearest_gate() {
        let vcp = small_vcp();
        let width = 360.0 / vcp.n_rays as f64;
        let ray_az = ((10.0 + 0.5) * width) as f32;
        let ranges = range_axis(vcp.range_start_m, vcp.range_step_m, vcp.n_gates);
        // put the centre exactly on gate (ray 10, gate 40) of sweep 0
        let (cx, cy) = gate_xy(ranges[40], ray_az, vcp.elevations_deg[0]);
        let field = FieldModel::GaussianStorm {
            center_x_m: cx,
            center_y_m: cy,
            sigma_m: 3000.0,
            peak_dbz: 55.0,
            advection_u_ms: 0.0,
            advection_v_ms: 0.0,
        };
        let vols = generate_synthetic(&SynthConfig::new(vcp, 1, field)).unwrap();
        let s = &vols[0].sweeps[0];
        let ray = s.geometry.azimuth_deg.iter().position(|a| *a == ray_az).unwrap();
        let dbz = &s.moments[&MomentKind::Dbzh];
        let max = dbz.iter().cloned().fold(f32::MIN, f32::max);
        assert_eq!(max, 55.0);
        assert_eq!(dbz[[ray, 40]], 55.0);
    }

    #[test]
    fn toml_config() {
        let text = r#"
            seed = 42
            n_volumes = 2
            start_time = "2011-05-20T06:00:00Z"
            moments = ["DBZH", "ZDR"]
            [vcp]
            preset = "VCP-12"
            n_gates = 10
            [field]
            kind = "constant"
            value = 12.5
        "#;
        let cfg = SynthConfig::from_toml(text).unwrap();
        assert_eq!(cfg.vcp.name, "VCP-12");
        assert_eq!(cfg.vcp.n_gates, 10);
        assert_eq!(cfg.moments, vec![MomentKind::Dbzh, MomentKind::Zdr]);
        assert_eq!(cfg.field, FieldModel::Constant { value: 12.5 });
        assert!(SynthConfig::from_toml("n_volumes = 0\n[field]\nkind = \"constant\"\nvalue = 1.0").is_err());
        assert!(SynthConfig::from_toml("n_volumes = 1\nbogus = 1\n[field]\nkind = \"constant\"\nvalue = 1.0").is_err());
    }
}
