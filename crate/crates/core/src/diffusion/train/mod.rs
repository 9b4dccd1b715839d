//! Classifier-free-guidance training loop.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ConditionKey;
use crate::error::CoreError;
use crate::model::{score_forward, ModelConfig, ParamBind};
use crate::seeding;
use crate::signal::EpochSet;
use crate::tensor::{save_checkpoint, Adam, Graph, ParamStore, Tensor};
use crate::Result;

use super::{CheckpointMeta, DataDesc, VpSchedule, CHECKPOINT_KIND_SCORE, T_EPS};

/// Training hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub ema_decay: f64,
    /// Probability of replacing the condition with the unconditional token.
    pub p_uncond: f64,
    /// Validation / checkpoint cadence; must divide `steps`.
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 16,
            lr: 1e-4,
            ema_decay: 0.999,
            p_uncond: 0.1,
            eval_every: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(CoreError::InvalidConfig(
                "steps and batch_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.p_uncond) {
            return Err(CoreError::InvalidConfig(format!(
                "p_uncond must lie in [0, 1), got {}",
                self.p_uncond
            )));
        }
        if self.eval_every == 0 || self.steps % self.eval_every != 0 {
            return Err(CoreError::InvalidConfig(format!(
                "eval_every {} must divide steps {}",
                self.eval_every, self.steps
            )));
        }
        if self.lr <= 0.0 {
            return Err(CoreError::InvalidConfig("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(CoreError::InvalidConfig(format!(
                "ema_decay must lie in [0, 1), got {}",
                self.ema_decay
            )));
        }
        Ok(())
    }
}

/// One training-log row; serialized as CSV `step,loss,val_loss,wall_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub val_loss: Option<f64>,
    pub wall_time_s: f64,
}

/// Writes the training log CSV (LF endings).
pub fn write_training_log(rows: &[LogRow], path: &Path) -> Result<()> {
    let mut out = String::from("step,loss,val_loss,wall_time\n");
    for r in rows {
        let val = r
            .val_loss
            .map(|v| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.step, r.loss, val, r.wall_time_s));
    }
    std::fs::write(path, out).map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Single-writer training state.
pub struct Trainer {
    pub model_cfg: ModelConfig,
    pub schedule: VpSchedule,
    pub cfg: TrainConfig,
    store: ParamStore<f32>,
    opt: Adam<f32>,
    rng: ChaCha8Rng,
    step: u64,
    loss_tail: VecDeque<f64>,
    data_desc: Option<DataDesc>,
}

impl Trainer {
    pub fn new(model_cfg: ModelConfig, schedule: VpSchedule, cfg: TrainConfig) -> Result<Self> {
        model_cfg.validate()?;
        schedule.validate()?;
        cfg.validate()?;
        let store = model_cfg.init_params(cfg.seed)?;
        Ok(Trainer {
            opt: Adam::new(cfg.lr)?,
            rng: seeding::rng_from(&[cfg.seed, 0x747261696e]),
            store,
            model_cfg,
            schedule,
            cfg,
            step: 0,
            loss_tail: VecDeque::with_capacity(16),
            data_desc: None,
        })
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Draws a batch (with replacement), perturbs it, and applies one
    /// optimizer + EMA update. Returns the loss.
    pub fn train_step(&mut self, train: &EpochSet) -> Result<f64> {
        if train.is_empty() {
            return Err(CoreError::InvalidConfig("training set is empty".into()));
        }
        if self.data_desc.is_none() {
            self.data_desc = Some(DataDesc {
                fs: train.fs(),
                epoch_len: train.epoch_len(),
                channels: train.layout().names().to_vec(),
            });
        }
        let b = self.cfg.batch_size;
        let (c, t_len) = (train.n_channels(), train.epoch_len());

        let mut x0 = Tensor::<f32>::zeros(&[b, c, t_len]);
        let mut conds = Vec::with_capacity(b);
        let mut times = Vec::with_capacity(b);
        for i in 0..b {
            let idx = self.rng.random_range(0..train.n_epochs());
            let ep = &train.epochs()[idx];
            let cond = if self.cfg.p_uncond > 0.0
                && self.rng.random::<f64>() < self.cfg.p_uncond
            {
                ConditionKey::Unconditional
            } else {
                ep.condition
            };
            conds.push(self.model_cfg.cond_index(cond)?);
            times.push(T_EPS + (1.0 - T_EPS) * self.rng.random::<f64>());
            let dst = &mut x0.data_mut()[i * c * t_len..(i + 1) * c * t_len];
            for (d, &s) in dst.iter_mut().zip(ep.data.iter()) {
                *d = s;
            }
        }

        // Perturb: x_t = m(t)·x0 + σ(t)·z, target is z.
        let mut xt = x0;
        let mut z = Tensor::<f32>::zeros(&[b, c, t_len]);
        for i in 0..b {
            let (m, sigma) = self.schedule.marginal(times[i])?;
            let base = i * c * t_len;
            for j in 0..c * t_len {
                let zj: f64 = self.rng.sample(StandardNormal);
                z.data_mut()[base + j] = zj as f32;
                let xv = xt.data()[base + j] as f64;
                xt.data_mut()[base + j] = (m * xv + sigma * zj) as f32;
            }
        }

        let mut g = Graph::new();
        let bind = ParamBind::new(&mut g, &self.store, true);
        let x = g.constant(xt);
        let eps_hat = score_forward(&mut g, &self.model_cfg, &bind, x, &times, &conds)?;
        let target = g.constant(z);
        let loss_node = g.mse_loss(eps_hat, target)?;
        let loss = g.value(loss_node).item() as f64;

        if !loss.is_finite() {
            let t_lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
            let t_hi = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Err(CoreError::Diverged(format!(
                "loss {loss} at step {} (t ∈ [{t_lo:.4}, {t_hi:.4}]); recent losses: {:?}",
                self.step + 1,
                self.loss_tail
            )));
        }

        g.backward(loss_node)?;
        let grads = bind.grads(&g);
        self.opt.step(&mut self.store, &grads)?;
        self.store.ema_update(self.cfg.ema_decay)?;

        self.step += 1;
        if self.loss_tail.len() == 16 {
            self.loss_tail.pop_front();
        }
        self.loss_tail.push_back(loss);
        Ok(loss)
    }

    /// Validation loss over the whole validation set with a step-derived
    /// RNG stream, so the number repeats exactly for identical state.
    pub fn val_loss(&self, val: &EpochSet) -> Result<f64> {
        if val.is_empty() {
            return Err(CoreError::InvalidConfig("validation set is empty".into()));
        }
        let mut rng = seeding::rng_from(&[self.cfg.seed, 0x76616c, self.step]);
        let (c, t_len) = (val.n_channels(), val.epoch_len());
        let chunk = self.cfg.batch_size.max(1);
        let mut total = 0.0f64;
        let mut count = 0usize;
        let mut i = 0usize;
        while i < val.n_epochs() {
            let b = chunk.min(val.n_epochs() - i);
            let mut xt = Tensor::<f32>::zeros(&[b, c, t_len]);
            let mut z = Tensor::<f32>::zeros(&[b, c, t_len]);
            let mut conds = Vec::with_capacity(b);
            let mut times = Vec::with_capacity(b);
            for j in 0..b {
                let ep = &val.epochs()[i + j];
                conds.push(self.model_cfg.cond_index(ep.condition)?);
                let t = T_EPS + (1.0 - T_EPS) * rng.random::<f64>();
                times.push(t);
                let (m, sigma) = self.schedule.marginal(t)?;
                let base = j * c * t_len;
                for (k, &s) in ep.data.iter().enumerate() {
                    let zj: f64 = rng.sample(StandardNormal);
                    z.data_mut()[base + k] = zj as f32;
                    xt.data_mut()[base + k] = (m * s as f64 + sigma * zj) as f32;
                }
            }
            let mut g = Graph::new();
            let bind = ParamBind::new(&mut g, &self.store, false);
            let x = g.constant(xt);
            let eps_hat = score_forward(&mut g, &self.model_cfg, &bind, x, &times, &conds)?;
            let target = g.constant(z);
            let loss_node = g.mse_loss(eps_hat, target)?;
            total += g.value(loss_node).item() as f64 * b as f64;
            count += b;
            i += b;
        }
        Ok(total / count as f64)
    }

    /// Full run: `steps` updates, validation + checkpoint every
    /// `eval_every`. Checkpoints land in `out_dir` as `ckpt_<step>.erpd`.
    pub fn run(
        &mut self,
        train: &EpochSet,
        val: &EpochSet,
        out_dir: Option<&Path>,
    ) -> Result<Vec<LogRow>> {
        let started = Instant::now();
        let mut rows = Vec::new();
        for _ in 0..self.cfg.steps {
            let loss = self.train_step(train)?;
            let at_eval = self.step % self.cfg.eval_every == 0;
            let val_loss = if at_eval {
                Some(self.val_loss(val)?)
            } else {
                None
            };
            if at_eval {
                if let Some(dir) = out_dir {
                    self.save_checkpoint(&dir.join(format!("ckpt_{:07}.erpd", self.step)))?;
                }
            }
            rows.push(LogRow {
                step: self.step,
                loss,
                val_loss,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
        }
        Ok(rows)
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            kind: CHECKPOINT_KIND_SCORE.to_string(),
            step: self.step,
            model: self.model_cfg.clone(),
            schedule: self.schedule,
            data: self.data_desc.clone(),
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_string(&self.checkpoint_meta())
            .map_err(|e| CoreError::json(path.display().to_string(), e))?;
        save_checkpoint(&self.store, &meta, path)
    }
}

/// Loads a score checkpoint and validates its JSON header.
pub fn load_score_checkpoint(path: &Path) -> Result<(ParamStore<f32>, CheckpointMeta)> {
    let (store, json) = crate::tensor::load_checkpoint(path)?;
    let meta: CheckpointMeta =
        serde_json::from_str(&json).map_err(|e| CoreError::json(path.display().to_string(), e))?;
    if meta.kind != CHECKPOINT_KIND_SCORE {
        return Err(CoreError::Format(format!(
            "checkpoint kind {:?} is not a score model",
            meta.kind
        )));
    }
    Ok((store, meta))
}
