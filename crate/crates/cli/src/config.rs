//! Run configuration: one JSON document, schema-validated, with CLI flags
//! taking precedence over file values and file values over defaults.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use erpdiff_core::diffusion::{SampleConfig, TrainConfig, VpSchedule};
use erpdiff_core::metrics::{EvalOptions, FxConfig};
use erpdiff_core::model::ModelConfig;
use erpdiff_core::signal::PreprocessConfig;

/// Architecture section: everything in [`ModelConfig`] except the condition
/// vocabulary and input width, which always come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_blocks: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub kernel_size: usize,
    pub dilation_cycle: Vec<usize>,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
    pub time_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            n_blocks: m.n_blocks,
            residual_channels: m.residual_channels,
            skip_channels: m.skip_channels,
            kernel_size: m.kernel_size,
            dilation_cycle: m.dilation_cycle,
            time_embed_dim: m.time_embed_dim,
            cond_embed_dim: m.cond_embed_dim,
            time_scale: m.time_scale,
        }
    }
}

impl ModelSection {
    /// Full model config for a dataset's channel count and id vocabulary.
    pub fn into_model_config(
        self,
        in_channels: usize,
        subjects: Vec<u32>,
        sessions: Vec<u32>,
    ) -> ModelConfig {
        ModelConfig {
            in_channels,
            n_blocks: self.n_blocks,
            residual_channels: self.residual_channels,
            skip_channels: self.skip_channels,
            kernel_size: self.kernel_size,
            dilation_cycle: self.dilation_cycle,
            time_embed_dim: self.time_embed_dim,
            cond_embed_dim: self.cond_embed_dim,
            time_scale: self.time_scale,
            subjects,
            sessions,
            n_classes: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub ema_decay: f64,
    pub p_uncond: f64,
    pub eval_every: u64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            ema_decay: t.ema_decay,
            p_uncond: t.p_uncond,
            eval_every: t.eval_every,
            seed: t.seed,
            val_fraction: 0.1,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            ema_decay: self.ema_decay,
            p_uncond: self.p_uncond,
            eval_every: self.eval_every,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub n_projections: usize,
    pub peak_window: Option<(f64, f64)>,
    pub lda_gamma: Option<f64>,
    pub folds: usize,
    pub seed: u64,
    pub fid_random_half_repeats: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            n_projections: 128,
            peak_window: None,
            lda_gamma: None,
            folds: 5,
            seed: 0,
            fid_random_half_repeats: 20,
        }
    }
}

impl MetricsSection {
    pub fn to_eval_options(self) -> EvalOptions {
        EvalOptions {
            n_projections: self.n_projections,
            seed: self.seed,
            peak_window: self.peak_window,
            lda_gamma: self.lda_gamma,
            folds: self.folds,
        }
    }
}

/// The whole run configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    pub schedule: VpSchedule,
    pub train: TrainSection,
    pub sample: SampleConfig,
    pub metrics: MetricsSection,
    pub fx: FxConfig,
    /// Upper bound on the per-chunk sampling batch.
    pub sample_max_batch: usize,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        if cfg.sample_max_batch == 0 {
            cfg.sample_max_batch = 512;
        }
        // A top-level seed seeds every section that was not explicitly set.
        if let Some(s) = cfg.seed {
            cfg.train.seed = s;
            cfg.sample.seed = s;
            cfg.metrics.seed = s;
            cfg.fx.seed = s;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_without_file() {
        let cfg = RunConfig::load(None).unwrap();
        assert_eq!(cfg.metrics.n_projections, 128);
        assert_eq!(cfg.sample_max_batch, 512);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"not_a_key": 1}"#).unwrap();
        let err = RunConfig::load(Some(&p)).unwrap_err();
        assert!(format!("{err:#}").contains("not_a_key"), "{err:#}");
    }

    #[test]
    fn top_level_seed_propagates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"seed": 99}"#).unwrap();
        let cfg = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.sample.seed, 99);
        assert_eq!(cfg.metrics.seed, 99);
    }
}
