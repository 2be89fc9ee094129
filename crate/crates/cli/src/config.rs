use std::path::{Path, PathBuf};

use serde::Deserialize;

use matcha_core::io::VolumeFormat;
use matcha_core::EulerZYZ;

use crate::{Failure, SubpixelArg};

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Quick,
    Paper,
}

/// Defaults read from `--config`. Keys mirror the flag names; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub preset: Option<Preset>,
    pub bands: Option<Vec<usize>>,
    pub m_iter: Option<usize>,
    pub n_c: Option<usize>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub l_max: Option<usize>,
    pub target: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub format: Option<VolumeFormat>,
    pub translate: Option<usize>,
    pub outer_iterations: Option<usize>,
    pub subpixel: Option<SubpixelArg>,
    pub upsample: Option<usize>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub n: Option<usize>,
    pub blobs: Option<usize>,
    pub snr: Option<Vec<f64>>,
    pub methods: Option<Vec<String>>,
    pub ablation: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub no_timing: Option<bool>,
    pub csv: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub density: Option<f64>,
    pub tau: Option<f64>,
    pub radius: Option<f64>,
    pub centers: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))
    }
}

/// `a,b,g;a,b,g` in degrees.
pub fn parse_centers(s: &str) -> Result<Vec<EulerZYZ>, Failure> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let v: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::config(format!("bad center {p:?}: {e}")))?;
            match v[..] {
                [a, b, g] => Ok(EulerZYZ::from_degrees(a, b, g)),
                _ => Err(Failure::config(format!("center {p:?} needs three angles"))),
            }
        })
        .collect()
}
