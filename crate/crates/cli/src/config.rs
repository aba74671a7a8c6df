use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapeedit_core::autoencoder::AutoencoderConfig;
use shapeedit_core::editor::EditConfig;
use shapeedit_core::jointspace::{JointConfig, MiningStrategy};
use shapeedit_core::metrics::DEFAULT_SWELL;
use shapeedit_core::rng::sha256_hex;
use shapeedit_core::shapeworld::DatasetConfig;
use shapeedit_core::{Error, Result};

/// A joint-space training recipe compared in the benchmark tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Multiutterance,
    SharedContext,
    Random,
    /// No disentanglement term.
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Multiutterance,
        Variant::SharedContext,
        Variant::Random,
        Variant::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Multiutterance => "multiutterance",
            Variant::SharedContext => "shared_context",
            Variant::Random => "random",
            Variant::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// `base` with this variant's mining strategy and weight.
    pub fn joint_config(self, base: &JointConfig) -> JointConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Multiutterance => cfg.mining = MiningStrategy::Multiutterance,
            Variant::SharedContext => cfg.mining = MiningStrategy::SharedContext,
            Variant::Random => cfg.mining = MiningStrategy::Random,
            Variant::Baseline => cfg.lambda = 0.0,
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Number of (test shape, utterance) edits.
    pub edits: usize,
    /// Rounds in the iterative-editing table.
    pub rounds: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            edits: 200,
            rounds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub swell: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            swell: DEFAULT_SWELL,
        }
    }
}

/// Everything a run depends on besides the output location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the dataset, the autoencoder and the benchmark case selection.
    pub seed: u64,
    /// Joint-space training seeds; tables report each and their median.
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub dataset: DatasetConfig,
    pub autoencoder: AutoencoderConfig,
    pub joint: JointConfig,
    pub edit: EditConfig,
    pub benchmark: BenchmarkConfig,
    pub metrics: MetricConfig,
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            seeds: vec![1, 2, 3],
            variants: Variant::ALL.to_vec(),
            dataset: DatasetConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            joint: JointConfig::default(),
            edit: EditConfig::default(),
            benchmark: BenchmarkConfig::default(),
            metrics: MetricConfig::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.autoencoder.validate()?;
        self.joint.validate()?;
        self.edit.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config(
                "at least one training seed is required".into(),
            ));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if self.benchmark.edits == 0 || self.benchmark.rounds == 0 {
            return Err(Error::Config(
                "benchmark edits and rounds must be positive".into(),
            ));
        }
        if !(self.metrics.swell >= 0.0) {
            return Err(Error::Config(format!(
                "swell must be non-negative, got {}",
                self.metrics.swell
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        Ok(sha256_hex(&serde_json::to_vec(&c)?))
    }
}
