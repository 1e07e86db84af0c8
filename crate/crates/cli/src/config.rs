//! Config-file support: a flat JSON file of optional keys that fills in
//! whatever the command line leaves unset. Flags always win.

use std::path::Path;

use crate::CliError;

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    // dataset generation
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub frames: Option<usize>,
    pub channels: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub blob_size: Option<usize>,
    pub blob_intensity: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub hf_amplitude: Option<f64>,

    // optimizer
    pub epsilon: Option<f64>,
    pub iterations: Option<usize>,
    pub lambda: Option<f64>,
    pub area: Option<f64>,
    pub blur_sigma: Option<f64>,
    pub mask_init: Option<f64>,
    pub mask_step: Option<usize>,
    pub mask_smooth_sigma: Option<f64>,
    pub objective: Option<String>,
    pub method: Option<String>,
    pub rl: Option<f64>,
    pub rh: Option<f64>,
    pub target: Option<String>,

    // metrics
    pub tau: Option<f64>,
    pub deletion_steps: Option<usize>,
    pub deletion_mode: Option<String>,
    pub labels: Option<String>,

    // training
    pub model_kind: Option<String>,
    pub temperature: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub conv_channels: Option<usize>,
    pub kernel_t: Option<usize>,
    pub kernel_hw: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {}", p.display(), e)))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {}", p.display(), e)))
            }
        }
    }
}

/// Flag value, else config-file value, else the built-in default.
pub fn resolve<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

/// Flag value, else config-file value.
pub fn resolve_opt<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}
