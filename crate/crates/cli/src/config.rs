//! Config file sections and their flag overlays.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Top level of a `--config` file: global keys plus one table per
/// subcommand.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub gen: Option<GenParams>,
    #[serde(default)]
    pub train: Option<TrainParams>,
    #[serde(default)]
    pub eval: Option<EvalParams>,
    #[serde(default)]
    pub sweep: Option<SweepParams>,
    #[serde(default)]
    pub symmetry: Option<SymmetryParams>,
    #[serde(default)]
    pub geometry: Option<GeometryParams>,
    #[serde(default)]
    pub ingest: Option<IngestParams>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub dim: Option<usize>,
    pub basis: Option<String>,
    pub samples: usize,
    pub mode: String,
    pub sampler: String,
    pub train_fraction: f64,
    pub grid: usize,
    pub halfwidth: f64,
    pub waist: f64,
    pub wavenumber: f64,
    pub plane_z: f64,
    pub supersample: usize,
    pub noise_sigma: f64,
    pub poisson_scale: Option<f64>,
    pub jitter: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            dim: None,
            basis: None,
            samples: 10_000,
            mode: "pair".into(),
            sampler: "uniform-box".into(),
            train_fraction: 0.8,
            grid: 64,
            halfwidth: 4.0,
            waist: 1.0,
            wavenumber: 1.0,
            plane_z: 0.0,
            supersample: 1,
            noise_sigma: 0.0,
            poisson_scale: None,
            jitter: 0.0,
        }
    }
}

/// Regressor and compressor settings shared by `train`, `sweep` and
/// `symmetry`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitParams {
    pub regressor: String,
    pub ridge: f64,
    pub compressor: String,
    pub trees: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub candidate_features: Option<usize>,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            regressor: "linear".into(),
            ridge: 0.0,
            compressor: "dual".into(),
            trees: 100,
            min_samples_split: 5,
            max_depth: None,
            candidate_features: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub data: Option<PathBuf>,
    pub mode: Option<String>,
    pub latent_per_channel: Option<usize>,
    pub latent_total: Option<usize>,
    #[serde(flatten)]
    pub fit: FitParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub against: String,
    pub predict_only: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            model: None,
            data: None,
            against: "correct".into(),
            predict_only: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    pub data: Option<PathBuf>,
    pub dims: Option<Vec<usize>>,
    pub modes: Vec<String>,
    pub regressors: Vec<String>,
    #[serde(flatten)]
    pub fit: FitParams,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            data: None,
            dims: None,
            modes: vec!["single".into(), "pair".into()],
            regressors: vec!["linear".into()],
            fit: FitParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SymmetryParams {
    pub data: Option<PathBuf>,
    pub dims: Option<usize>,
    #[serde(flatten)]
    pub fit: FitParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    pub thetas: Vec<String>,
    pub phi_samples: usize,
    pub grid: usize,
    pub halfwidth: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            thetas: ["pi/2", "3pi/4", "7pi/8", "pi"].map(String::from).to_vec(),
            phi_samples: 64,
            grid: 64,
            halfwidth: 4.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestParams {
    pub manifest: Option<PathBuf>,
}

/// Parses `3pi/4`, `pi`, `-pi/2` or a plain number.
pub fn parse_angle(text: &str) -> Result<f64, CliError> {
    let t = text.trim();
    let bad = || CliError::Config(format!("bad angle {text:?}"));
    let Some(pos) = t.find("pi") else {
        return t.parse().map_err(|_| bad());
    };
    let coeff = match &t[..pos] {
        "" => 1.0,
        "-" => -1.0,
        c => c.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
    };
    let rest = &t[pos + 2..];
    let div = match rest {
        "" => 1.0,
        r => r.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(coeff * std::f64::consts::PI / div)
}

/// Parses `1,2,5` and ranges such as `1-50`, mixed freely.
pub fn parse_dims(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("bad dimension list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn split_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}
