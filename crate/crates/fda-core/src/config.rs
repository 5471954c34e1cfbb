//! Run configuration: presets, JSON config files, and override layering.
//!
//! Precedence, lowest to highest: preset defaults, config file, command-line
//! flags. Overrides are expressed as a [`PartialRunConfig`] with one optional
//! field per key; unknown keys in a config file are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{RatingFormat, SplitStrategy};
use crate::trainer::{BackboneKind, TrainConfig};
use crate::{FdaError, Result};

/// The full flat configuration for a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    /// Input rating file format: "movielens_dat" or "tsv".
    pub format: String,
    /// Ratings strictly above this value count as positive interactions.
    pub threshold: f64,
    /// Iterative k-core filter parameter; 0 disables filtering.
    pub kcore: u32,
    /// Split strategy: "80/20" or "70/10/20".
    pub split: String,
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub outer_lr: f64,
    pub inner_lr: f64,
    pub inner_steps_per_outer: usize,
    pub mask_ratio: f64,
    pub epsilon: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
    /// "mf" or "graph".
    pub backbone: String,
    pub eval_every: usize,
    pub k_list: Vec<usize>,
    pub fda: bool,
    pub hypothesis1: bool,
    pub hypothesis2: bool,
    pub weight_decay: f64,
    pub reinit_theta_each_epoch: bool,
    pub mask_per_batch: bool,
    /// Worker threads for top-K evaluation.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            format: "tsv".to_string(),
            threshold: 0.0,
            kcore: 0,
            split: "80/20".to_string(),
            dim: t.dim,
            epochs: t.epochs,
            batch_size: t.batch_size,
            outer_lr: t.outer_lr,
            inner_lr: t.inner_lr,
            inner_steps_per_outer: t.inner_steps_per_outer,
            mask_ratio: t.mask_ratio,
            epsilon: t.epsilon,
            warmup_epochs: t.warmup_epochs,
            seed: t.seed,
            backbone: "mf".to_string(),
            eval_every: t.eval_every,
            k_list: t.k_list,
            fda: t.fda,
            hypothesis1: t.hypothesis1,
            hypothesis2: t.hypothesis2,
            weight_decay: t.weight_decay,
            reinit_theta_each_epoch: t.reinit_theta_each_epoch,
            mask_per_batch: t.mask_per_batch,
            threads: 1,
        }
    }
}

/// Sparse overlay: any present key overrides the base.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialRunConfig {
    pub format: Option<String>,
    pub threshold: Option<f64>,
    pub kcore: Option<u32>,
    pub split: Option<String>,
    pub dim: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub outer_lr: Option<f64>,
    pub inner_lr: Option<f64>,
    pub inner_steps_per_outer: Option<usize>,
    pub mask_ratio: Option<f64>,
    pub epsilon: Option<f64>,
    pub warmup_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub backbone: Option<String>,
    pub eval_every: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub fda: Option<bool>,
    pub hypothesis1: Option<bool>,
    pub hypothesis2: Option<bool>,
    pub weight_decay: Option<f64>,
    pub reinit_theta_each_epoch: Option<bool>,
    pub mask_per_batch: Option<bool>,
    pub threads: Option<usize>,
}

impl PartialRunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| FdaError::io(path, e))?;
        let parsed: PartialRunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| FdaError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(parsed)
    }
}

macro_rules! overlay {
    ($base:expr, $part:expr, $($field:ident),+ $(,)?) => {
        $(
            if let Some(v) = $part.$field.clone() {
                $base.$field = v;
            }
        )+
    };
}

impl RunConfig {
    /// Named defaults for the bundled experiment setups.
    ///
    /// - `movielens`: 1-5 star ratings, positives strictly above 3,
    ///   per-user 80/20 split, no core filtering
    /// - `lastfm`: implicit listen counts, 10-core filtering,
    ///   per-user 70/10/20 split
    pub fn preset(name: &str) -> Result<Self> {
        let base = RunConfig::default();
        match name {
            "movielens" => Ok(RunConfig {
                format: "movielens_dat".to_string(),
                threshold: 3.0,
                kcore: 0,
                split: "80/20".to_string(),
                ..base
            }),
            "lastfm" => Ok(RunConfig {
                format: "tsv".to_string(),
                threshold: 0.0,
                kcore: 10,
                split: "70/10/20".to_string(),
                ..base
            }),
            "synthetic" => Ok(base),
            other => Err(FdaError::InvalidConfig(format!(
                "unknown preset {other:?} (expected movielens, lastfm, or synthetic)"
            ))),
        }
    }

    /// Applies an overlay in place; present keys win.
    pub fn apply(&mut self, part: &PartialRunConfig) {
        overlay!(
            self, part, format, threshold, kcore, split, dim, epochs, batch_size, outer_lr,
            inner_lr, inner_steps_per_outer, mask_ratio, epsilon, warmup_epochs, seed, backbone,
            eval_every, k_list, fda, hypothesis1, hypothesis2, weight_decay,
            reinit_theta_each_epoch, mask_per_batch, threads,
        );
    }

    /// Resolves preset, optional file, and CLI overlay in precedence order.
    pub fn resolve(
        preset: Option<&str>,
        file: Option<&Path>,
        cli: &PartialRunConfig,
    ) -> Result<Self> {
        let mut cfg = match preset {
            Some(name) => RunConfig::preset(name)?,
            None => RunConfig::default(),
        };
        if let Some(path) = file {
            cfg.apply(&PartialRunConfig::from_file(path)?);
        }
        cfg.apply(cli);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rating_format(&self) -> Result<RatingFormat> {
        self.format.parse()
    }

    pub fn split_strategy(&self) -> Result<SplitStrategy> {
        match self.split.as_str() {
            "80/20" => Ok(SplitStrategy::Ratio8020),
            "70/10/20" => Ok(SplitStrategy::Ratio701020),
            other => Err(FdaError::InvalidConfig(format!(
                "unknown split {other:?} (expected \"80/20\" or \"70/10/20\")"
            ))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let backbone: BackboneKind = self.backbone.parse()?;
        let cfg = TrainConfig {
            dim: self.dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            outer_lr: self.outer_lr,
            inner_lr: self.inner_lr,
            inner_steps_per_outer: self.inner_steps_per_outer,
            mask_ratio: self.mask_ratio,
            epsilon: self.epsilon,
            warmup_epochs: self.warmup_epochs,
            seed: self.seed,
            backbone,
            eval_every: self.eval_every,
            k_list: self.k_list.clone(),
            fda: self.fda,
            hypothesis1: self.hypothesis1,
            hypothesis2: self.hypothesis2,
            weight_decay: self.weight_decay,
            reinit_theta_each_epoch: self.reinit_theta_each_epoch,
            mask_per_batch: self.mask_per_batch,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.rating_format()?;
        self.split_strategy()?;
        if self.threads == 0 {
            return Err(FdaError::InvalidConfig("threads must be positive".to_string()));
        }
        self.train_config()?;
        Ok(())
    }

    /// The fully resolved configuration, for echoing next to run outputs.
    pub fn effective_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
