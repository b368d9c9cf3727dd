//! Run configuration: a TOML file with one table per stage, overridden by
//! command-line flags, resolved and snapshotted beside every output.

use std::path::Path;

use contig_assoc::AssocConfig;
use contig_core::{
    aggregation_schemes, baselines, DenominatorMode, EncoderConfig, ExplainerConfig, FeatureOptions, HiddenVariant,
    LinearTask, TrainConfig,
};
use contig_genetics::io::short_hash;
use contig_genetics::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub hidden_variant: HiddenVariant,
    pub hidden_width: usize,
    pub repr_dim: usize,
    pub proj_dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            hidden_variant: e.hidden_variant,
            hidden_width: e.hidden_width,
            repr_dim: e.repr_dim,
            proj_dim: e.proj_dim,
        }
    }
}

impl EncoderSection {
    pub fn to_config(&self) -> EncoderConfig {
        EncoderConfig {
            hidden_variant: self.hidden_variant,
            hidden_width: self.hidden_width,
            repr_dim: self.repr_dim,
            proj_dim: self.proj_dim,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub decoupled_weight_decay: bool,
    pub epochs: usize,
    pub tau: f64,
    pub lambda: f64,
    pub denominator: DenominatorMode,
    pub scheme: String,
    /// Fraction of individuals, taken from the end of the image table,
    /// kept out of pretraining.
    pub holdout: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            decoupled_weight_decay: t.decoupled_weight_decay,
            epochs: t.epochs,
            tau: t.tau,
            lambda: t.lambda,
            denominator: t.denominator,
            scheme: t.scheme,
            holdout: 0.2,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            decoupled_weight_decay: self.decoupled_weight_decay,
            epochs: self.epochs,
            tau: self.tau,
            lambda: self.lambda,
            denominator: self.denominator,
            scheme: self.scheme.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub reference_batch_size: usize,
    pub ig_steps: usize,
    pub baseline: String,
    /// How many held-out individuals (after the reference) to explain.
    pub n_individuals: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        let e = ExplainerConfig::default();
        Self {
            reference_batch_size: e.reference_batch_size,
            ig_steps: e.ig_steps,
            baseline: e.baseline,
            n_individuals: 200,
        }
    }
}

impl ExplainSection {
    pub fn to_config(&self) -> ExplainerConfig {
        ExplainerConfig {
            reference_batch_size: self.reference_batch_size,
            ig_steps: self.ig_steps,
            baseline: self.baseline.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub task: LinearTask,
    /// Label table (`#iid` header); the ground-truth latent traits of a
    /// synthetic dataset are used when unset.
    pub labels: Option<String>,
    pub label_column: Option<String>,
    pub retrieval_batch: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            task: LinearTask::Regression,
            labels: None,
            label_column: None,
            retrieval_batch: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub features: FeatureOptions,
    pub encoder: EncoderSection,
    pub train: TrainSection,
    pub explain: ExplainSection,
    pub assoc: AssocConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            synth: SynthConfig::default(),
            features: FeatureOptions::default(),
            encoder: EncoderSection::default(),
            train: TrainSection::default(),
            explain: ExplainSection::default(),
            assoc: AssocConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

/// A flag value destined for `section.key` (or a top-level `key`).
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: &'static str,
    pub value: toml::Value,
}

impl Override {
    pub fn new(path: &'static str, value: impl Into<toml::Value>) -> Self {
        Self {
            path,
            value: value.into(),
        }
    }
}

fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().expect("non-empty path");
    let mut table = root;
    for p in parts {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// File (if any), then flag overrides, then validation.
    pub fn resolve(file: Option<&Path>, overrides: &[Override]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            set_path(&mut table, o.path, o.value.clone())?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: String| CliError::Config(e);
        self.synth.validate().map_err(|e| cfg(e.to_string()))?;
        let e = &self.encoder;
        if e.repr_dim == 0 || e.proj_dim == 0 || e.hidden_width == 0 {
            return Err(cfg("encoder widths must be positive".into()));
        }
        self.train.to_config(self.seed).validate().map_err(|e| cfg(e.to_string()))?;
        if !(0.0..1.0).contains(&self.train.holdout) {
            return Err(cfg(format!("train.holdout must be in [0, 1), got {}", self.train.holdout)));
        }
        aggregation_schemes().create(&self.train.scheme).map_err(|e| cfg(e.to_string()))?;
        self.explain.to_config().validate().map_err(|e| cfg(e.to_string()))?;
        baselines().create(&self.explain.baseline).map_err(|e| cfg(e.to_string()))?;
        self.assoc.validate().map_err(|e| cfg(e.to_string()))?;
        if self.features.modalities.is_empty() {
            return Err(cfg("features.modalities is empty".into()));
        }
        if self.features.raw_stride == 0 {
            return Err(cfg("features.raw_stride must be at least 1".into()));
        }
        if self.eval.retrieval_batch < 2 {
            return Err(cfg("eval.retrieval_batch must be at least 2".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the resolved snapshot.
    pub fn hash(&self) -> String {
        short_hash(self.to_toml().as_bytes())
    }
}
