//! Key/value config file. Every key mirrors a long flag (dashes become
//! underscores); a flag given on the command line wins.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub repo: Option<PathBuf>,
    pub branch: Option<String>,
    #[serde(rename = "ref")]
    pub reference: Option<String>,
    pub time_start: Option<String>,
    pub time_end: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub report: Option<String>,

    pub group: Option<String>,
    pub sweep: Option<usize>,
    pub moment: Option<String>,
    pub threshold: Option<f64>,
    pub zr_a: Option<f64>,
    pub zr_b: Option<f64>,
    pub max_gap: Option<f64>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,

    pub chunk_time: Option<u64>,
    pub chunk_azimuth: Option<u64>,
    pub chunk_range: Option<u64>,
    pub codec: Option<String>,
    pub message: Option<String>,
    pub author: Option<String>,
    pub timestamp: Option<String>,
    pub n_rays: Option<usize>,
    pub max_retries: Option<usize>,

    pub task: Option<String>,
    pub raw_dir: Option<PathBuf>,
    pub repeat: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}
