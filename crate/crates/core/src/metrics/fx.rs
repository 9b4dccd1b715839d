//! Compact convolutional target/non-target classifier whose penultimate
//! pooled activations provide the FID feature space.
//!
//! Stack: temporal conv → channel-mixing 1×1 conv → average pool →
//! separable temporal conv → average pool → linear head. Trained with a
//! least-squares objective on ±1 targets.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_train_val, ClassLabel};
use crate::error::CoreError;
use crate::model::ParamBind;
use crate::seeding;
use crate::signal::EpochSet;
use crate::tensor::{
    load_checkpoint, save_checkpoint, Adam, Graph, NodeId, ParamStore, Tensor,
};
use crate::Result;

use super::lda::balanced_accuracy;

pub const CHECKPOINT_KIND_FX: &str = "erpdiff-fx";

/// Architecture and training parameters of the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FxConfig {
    pub temporal_filters: usize,
    pub mix_filters: usize,
    pub kernel_size: usize,
    pub pool: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for FxConfig {
    fn default() -> Self {
        FxConfig {
            temporal_filters: 8,
            mix_filters: 16,
            kernel_size: 9,
            pool: 4,
            steps: 600,
            batch_size: 32,
            lr: 1e-3,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

/// On-disk header of a feature-extractor checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FxMeta {
    pub kind: String,
    pub config: FxConfig,
    pub in_channels: usize,
    pub epoch_len: usize,
    pub heldout_balanced_accuracy: f64,
}

/// Trained extractor: deterministic forward, fixed feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    pub meta: FxMeta,
    params: ParamStore<f32>,
}

impl FeatureExtractor {
    /// Pooled-feature dimension `F`.
    pub fn feature_dim(&self) -> usize {
        let p = self.meta.config.pool;
        self.meta.config.mix_filters * self.meta.epoch_len / (p * p)
    }

    fn forward<const WITH_HEAD: bool>(
        &self,
        g: &mut Graph<f32>,
        bind: &ParamBind,
        x: NodeId,
    ) -> Result<(NodeId, Option<NodeId>)> {
        let cfg = &self.meta.config;
        let b = g.value(x).shape()[0];
        let t = self.meta.epoch_len;
        let p = cfg.pool;

        let h = g.conv1d(x, bind.get("fx.conv1.w")?, 1)?;
        let h = g.bias_add(h, bind.get("fx.conv1.b")?)?;
        let h = g.silu(h);
        let h = g.conv1d(h, bind.get("fx.mix.w")?, 1)?;
        let h = g.bias_add(h, bind.get("fx.mix.b")?)?;
        let h = g.silu(h);
        // Average pool along time via reshape + mean over the last axis.
        let h = g.reshape(h, &[b, cfg.mix_filters, t / p, p])?;
        let h = g.mean_axis(h, 3)?;
        let h = g.conv1d(h, bind.get("fx.sep.w")?, 1)?;
        let h = g.bias_add(h, bind.get("fx.sep.b")?)?;
        let h = g.silu(h);
        let h = g.reshape(h, &[b, cfg.mix_filters, t / (p * p), p])?;
        let pooled = g.mean_axis(h, 3)?;
        let feats = g.reshape(pooled, &[b, self.feature_dim()])?;
        if WITH_HEAD {
            let logits = g.matmul(feats, bind.get("fx.head.w")?)?;
            let logits = g.bias_add(logits, bind.get("fx.head.b")?)?;
            Ok((feats, Some(logits)))
        } else {
            Ok((feats, None))
        }
    }

    /// Penultimate pooled activations, `[n, F]`, chunked over the set.
    pub fn features(&self, set: &EpochSet) -> Result<ndarray::Array2<f64>> {
        self.check_shape(set)?;
        let n = set.n_epochs();
        let mut out = ndarray::Array2::zeros((n, self.feature_dim()));
        let chunk = 256usize;
        let (c, t) = (set.n_channels(), set.epoch_len());
        let mut i = 0usize;
        while i < n {
            let b = chunk.min(n - i);
            let mut x = Tensor::<f32>::zeros(&[b, c, t]);
            for j in 0..b {
                x.data_mut()[j * c * t..(j + 1) * c * t]
                    .iter_mut()
                    .zip(set.epochs()[i + j].data.iter())
                    .for_each(|(d, &s)| *d = s);
            }
            let mut g = Graph::new();
            let bind = ParamBind::new(&mut g, &self.params, false);
            let xn = g.constant(x);
            let (feats, _) = self.forward::<false>(&mut g, &bind, xn)?;
            let fv = g.value(feats);
            if !fv.is_finite() {
                return Err(CoreError::NonFinite(
                    "feature extractor produced non-finite activations".into(),
                ));
            }
            for j in 0..b {
                for k in 0..self.feature_dim() {
                    out[[i + j, k]] = fv.data()[j * self.feature_dim() + k] as f64;
                }
            }
            i += b;
        }
        Ok(out)
    }

    /// Class decisions from the training head.
    pub fn predict(&self, set: &EpochSet) -> Result<Vec<ClassLabel>> {
        self.check_shape(set)?;
        let n = set.n_epochs();
        let (c, t) = (set.n_channels(), set.epoch_len());
        let mut preds = Vec::with_capacity(n);
        let chunk = 256usize;
        let mut i = 0usize;
        while i < n {
            let b = chunk.min(n - i);
            let mut x = Tensor::<f32>::zeros(&[b, c, t]);
            for j in 0..b {
                x.data_mut()[j * c * t..(j + 1) * c * t]
                    .iter_mut()
                    .zip(set.epochs()[i + j].data.iter())
                    .for_each(|(d, &s)| *d = s);
            }
            let mut g = Graph::new();
            let bind = ParamBind::new(&mut g, &self.params, false);
            let xn = g.constant(x);
            let (_, logits) = self.forward::<true>(&mut g, &bind, xn)?;
            let lv = g.value(logits.expect("head requested"));
            for j in 0..b {
                preds.push(if lv.data()[j] > 0.0 {
                    ClassLabel::Target
                } else {
                    ClassLabel::NonTarget
                });
            }
            i += b;
        }
        Ok(preds)
    }

    fn check_shape(&self, set: &EpochSet) -> Result<()> {
        if set.n_channels() != self.meta.in_channels || set.epoch_len() != self.meta.epoch_len {
            return Err(CoreError::ShapeMismatch(format!(
                "extractor trained on {}×{} epochs, got {}×{}",
                self.meta.in_channels,
                self.meta.epoch_len,
                set.n_channels(),
                set.epoch_len()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.meta)
            .map_err(|e| CoreError::json(path.display().to_string(), e))?;
        save_checkpoint(&self.params, &json, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, json) = load_checkpoint(path)?;
        let meta: FxMeta = serde_json::from_str(&json)
            .map_err(|e| CoreError::json(path.display().to_string(), e))?;
        if meta.kind != CHECKPOINT_KIND_FX {
            return Err(CoreError::Format(format!(
                "checkpoint kind {:?} is not a feature extractor",
                meta.kind
            )));
        }
        Ok(FeatureExtractor { meta, params })
    }
}

fn init_params(cfg: &FxConfig, in_channels: usize, epoch_len: usize) -> ParamStore<f32> {
    let mut rng = seeding::rng_from(&[cfg.seed, 0x6678]);
    let mut store = ParamStore::new();
    let fan = |n: usize| 1.0 / (n as f64).sqrt();
    let (f1, f2, k, p) = (cfg.temporal_filters, cfg.mix_filters, cfg.kernel_size, cfg.pool);
    store.insert(
        "fx.conv1.w",
        Tensor::randn(&[f1, in_channels, k], fan(in_channels * k), &mut rng),
    );
    store.insert("fx.conv1.b", Tensor::zeros(&[f1]));
    store.insert("fx.mix.w", Tensor::randn(&[f2, f1, 1], fan(f1), &mut rng));
    store.insert("fx.mix.b", Tensor::zeros(&[f2]));
    store.insert("fx.sep.w", Tensor::randn(&[f2, f2, 5], fan(f2 * 5), &mut rng));
    store.insert("fx.sep.b", Tensor::zeros(&[f2]));
    let feat = f2 * epoch_len / (p * p);
    store.insert("fx.head.w", Tensor::randn(&[feat, 1], fan(feat), &mut rng));
    store.insert("fx.head.b", Tensor::zeros(&[1]));
    store
}

/// Trains the extractor on real data (both classes) and reports held-out
/// balanced accuracy. Deterministic given the config seed.
pub fn train_feature_extractor(real: &EpochSet, cfg: &FxConfig) -> Result<FeatureExtractor> {
    if cfg.kernel_size % 2 == 0 {
        return Err(CoreError::InvalidConfig(
            "feature extractor kernel must be odd".into(),
        ));
    }
    if real.epoch_len() % (cfg.pool * cfg.pool) != 0 {
        return Err(CoreError::InvalidConfig(format!(
            "epoch length {} not divisible by pool² = {}",
            real.epoch_len(),
            cfg.pool * cfg.pool
        )));
    }
    let (train, heldout) = split_train_val(real, cfg.val_fraction, cfg.seed)?;
    let mut fx = FeatureExtractor {
        meta: FxMeta {
            kind: CHECKPOINT_KIND_FX.to_string(),
            config: *cfg,
            in_channels: real.n_channels(),
            epoch_len: real.epoch_len(),
            heldout_balanced_accuracy: 0.0,
        },
        params: init_params(cfg, real.n_channels(), real.epoch_len()),
    };

    let mut opt = Adam::new(cfg.lr)?;
    let mut rng = seeding::rng_from(&[cfg.seed, 0x66787472]);
    let (c, t) = (train.n_channels(), train.epoch_len());
    for step in 0..cfg.steps {
        let b = cfg.batch_size.min(train.n_epochs());
        let mut x = Tensor::<f32>::zeros(&[b, c, t]);
        let mut y = Tensor::<f32>::zeros(&[b, 1]);
        for j in 0..b {
            let idx = rng.random_range(0..train.n_epochs());
            let ep = &train.epochs()[idx];
            x.data_mut()[j * c * t..(j + 1) * c * t]
                .iter_mut()
                .zip(ep.data.iter())
                .for_each(|(d, &s)| *d = s);
            y.data_mut()[j] = match ep.condition.class() {
                Some(ClassLabel::Target) => 1.0,
                Some(ClassLabel::NonTarget) => -1.0,
                None => {
                    return Err(CoreError::Condition(
                        "unconditional epoch in extractor training".into(),
                    ))
                }
            };
        }
        let mut g = Graph::new();
        let bind = ParamBind::new(&mut g, &fx.params, true);
        let xn = g.constant(x);
        let (_, logits) = fx.forward::<true>(&mut g, &bind, xn)?;
        let target = g.constant(y);
        let loss = g.mse_loss(logits.expect("head requested"), target)?;
        let loss_v = g.value(loss).item() as f64;
        if !loss_v.is_finite() {
            return Err(CoreError::Diverged(format!(
                "feature extractor loss {loss_v} at step {step}"
            )));
        }
        g.backward(loss)?;
        let grads = bind.grads(&g);
        opt.step(&mut fx.params, &grads)?;
    }

    let truth: Vec<ClassLabel> = heldout
        .epochs()
        .iter()
        .map(|e| e.condition.class().expect("real epochs carry classes"))
        .collect();
    let preds = fx.predict(&heldout)?;
    fx.meta.heldout_balanced_accuracy = balanced_accuracy(&truth, &preds)?;
    Ok(fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use tempfile::tempdir;

    fn separable_set(seed: u64) -> EpochSet {
        generate_synthetic(&SyntheticSpec {
            n_subjects: 2,
            sessions_per_subject: 1,
            epochs_per_condition: 60,
            n_channels: 4,
            fs: 64.0,
            p300_amp_uv: vec![10.0, 10.0],
            p300_latency_s: vec![0.3, 0.35],
            noise_std_uv: 1.0,
            noise_ar: 0.3,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick_cfg() -> FxConfig {
        FxConfig {
            steps: 250,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn learns_separable_classes() {
        let set = separable_set(1);
        let fx = train_feature_extractor(&set, &quick_cfg()).unwrap();
        assert!(
            fx.meta.heldout_balanced_accuracy >= 0.9,
            "held-out BA {}",
            fx.meta.heldout_balanced_accuracy
        );
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let dir = tempdir().unwrap();
        let set = separable_set(2);
        let cfg = FxConfig {
            steps: 40,
            seed: 9,
            ..Default::default()
        };
        let a = train_feature_extractor(&set, &cfg).unwrap();
        let b = train_feature_extractor(&set, &cfg).unwrap();
        let pa = dir.path().join("a.erpd");
        let pb = dir.path().join("b.erpd");
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn feature_dim_fixed_by_architecture() {
        let set = separable_set(3);
        let cfg = FxConfig {
            steps: 10,
            seed: 1,
            ..Default::default()
        };
        let fx = train_feature_extractor(&set, &cfg).unwrap();
        // mix_filters × epoch_len / pool² = 16 × 64 / 16.
        assert_eq!(fx.feature_dim(), 64);
        let feats = fx.features(&set).unwrap();
        assert_eq!(feats.dim(), (set.n_epochs(), 64));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempdir().unwrap();
        let set = separable_set(4);
        let cfg = FxConfig {
            steps: 20,
            seed: 5,
            ..Default::default()
        };
        let fx = train_feature_extractor(&set, &cfg).unwrap();
        let path = dir.path().join("fx.erpd");
        fx.save(&path).unwrap();
        let back = FeatureExtractor::load(&path).unwrap();
        assert_eq!(fx, back);
        // Features identical after reload.
        assert_eq!(fx.features(&set).unwrap(), back.features(&set).unwrap());
    }

    #[test]
    fn pool_divisibility_enforced() {
        let set = generate_synthetic(&SyntheticSpec {
            n_subjects: 1,
            sessions_per_subject: 1,
            epochs_per_condition: 10,
            n_channels: 2,
            fs: 60.0, // 60 samples: not divisible by 16
            p300_amp_uv: vec![8.0],
            p300_latency_s: vec![0.3],
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert!(train_feature_extractor(&set, &quick_cfg()).is_err());
    }
}
