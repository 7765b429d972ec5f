//! Pipeline configuration file (TOML). Flags override config values;
//! the `GAZEKIT_DATA` environment variable overrides `dataset_root`.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use gazekit::gazenet::GazeNetConfig;
use gazekit::personalize::{CalibrationStrategy, Method};
use gazekit::splits::{FilterSpec, SplitStrategy, GOOGLE_SPLIT_RATIOS};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset_root: Option<PathBuf>,
    pub manifest_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub filters: FilterSpec,
    pub split: SplitSection,
    pub network: GazeNetConfig,
    pub personalization: PersonalizationSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub strategy: SplitStrategy,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            strategy: SplitStrategy::Mit,
            seed: 0,
            ratios: GOOGLE_SPLIT_RATIOS,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonalizationSection {
    pub method: Method,
    pub strategy: CalibrationStrategy,
    pub fit_fraction: f64,
    pub shuffle: bool,
    pub seed: u64,
    pub folds: usize,
    /// How many of the highest-frame-count users to personalize.
    pub users: usize,
    pub epsilon_grid: Vec<f64>,
    pub calibration_dots: Option<Vec<i64>>,
}

impl Default for PersonalizationSection {
    fn default() -> Self {
        PersonalizationSection {
            method: Method::Svr,
            strategy: CalibrationStrategy::RandomRatio,
            fit_fraction: 0.7,
            shuffle: true,
            seed: 0,
            folds: 3,
            users: 10,
            epsilon_grid: gazekit::personalize::DEFAULT_EPSILON_GRID.to_vec(),
            calibration_dots: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(PipelineConfig::default()),
        }
    }
}

/// Resolution order for the dataset root: explicit flag, then
/// `GAZEKIT_DATA`, then the config file.
pub fn resolve_dataset_root(flag: Option<PathBuf>, config: &PipelineConfig) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os("GAZEKIT_DATA").map(PathBuf::from))
        .or_else(|| config.dataset_root.clone())
}
