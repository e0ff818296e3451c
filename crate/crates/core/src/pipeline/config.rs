use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{Cutoffs, TrainConfig};
use crate::error::Result;
use crate::geometry::{ClassifyOptions, DEFAULT_BIFURCATION_TOL};
use crate::io;
use crate::pcat::{HuWindow, RoiRules};
use crate::stenosis::StenosisConfig;

/// Every tunable of the pipeline. Its hash is stamped on every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub bifurcation_tol: f64,
    pub classify: ClassifyOptions,
    pub stenosis: StenosisConfig,
    pub window: HuWindow,
    pub roi: RoiRules,
    pub cutoffs: Cutoffs,
    pub train: TrainConfig,
    /// Significance level for the normality check before group tests.
    pub alpha: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bifurcation_tol: DEFAULT_BIFURCATION_TOL,
            classify: ClassifyOptions::default(),
            stenosis: StenosisConfig::default(),
            window: HuWindow::default(),
            roi: RoiRules::default(),
            cutoffs: Cutoffs::default(),
            train: TrainConfig::default(),
            alpha: 0.05,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; absent fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    /// Sets the master seed, which also seeds training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = io::to_canonical_json(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Wraps a JSON document with the tool version and config hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub tool_version: String,
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Stamped<T> {
    pub fn new(config_hash: &str, body: T) -> Self {
        Self {
            tool_version: io::TOOL_VERSION.to_string(),
            config_hash: config_hash.to_string(),
            body,
        }
    }
}

pub fn write_stamped<T: Serialize>(path: &Path, config_hash: &str, body: &T) -> Result<()> {
    io::write_json(path, &Stamped::new(config_hash, body))
}
