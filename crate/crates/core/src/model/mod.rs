//! Conditional noise-prediction network: a dilated-convolution residual
//! stack over the time axis with additive continuous-time and condition
//! embeddings injected per block.
//!
//! The network predicts the noise ε added at diffusion time `t`
//! (ε-parameterization); the score conversion `s = −ε/σ(t)` lives in the
//! sampler. No normalization layer appears anywhere — the data stays in µV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::ConditionKey;
use crate::error::CoreError;
use crate::seeding;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar, Tensor};
use crate::Result;

/// Architecture hyper-parameters plus the condition vocabulary.
///
/// `subjects` and `sessions` double as the id→embedding-row mapping; each
/// embedding table carries one extra row for the unconditional token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub n_blocks: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub kernel_size: usize,
    pub dilation_cycle: Vec<usize>,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
    /// Sinusoid input scaling: τ = t · time_scale.
    pub time_scale: f64,
    pub subjects: Vec<u32>,
    pub sessions: Vec<u32>,
    pub n_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 19,
            n_blocks: 8,
            residual_channels: 64,
            skip_channels: 64,
            kernel_size: 3,
            dilation_cycle: vec![1, 2, 4, 8],
            time_embed_dim: 128,
            cond_embed_dim: 64,
            time_scale: 1000.0,
            subjects: (1..=2).collect(),
            sessions: vec![1, 2],
            n_classes: 2,
        }
    }
}

/// Embedding-row indices for one example; the unconditional token uses the
/// extra final row of each table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CondIndex {
    pub subject: usize,
    pub session: usize,
    pub class: usize,
}

impl ModelConfig {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn dilation(&self, block: usize) -> usize {
        self.dilation_cycle[block % self.dilation_cycle.len()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.n_blocks == 0
            || self.residual_channels == 0
            || self.skip_channels == 0
        {
            return Err(CoreError::InvalidConfig(
                "channel counts and block count must be positive".into(),
            ));
        }
        if self.kernel_size % 2 == 0 {
            return Err(CoreError::InvalidConfig(format!(
                "kernel_size must be odd for \"same\" padding, got {}",
                self.kernel_size
            )));
        }
        if self.dilation_cycle.is_empty() || self.dilation_cycle.iter().any(|&d| d == 0) {
            return Err(CoreError::InvalidConfig(
                "dilation_cycle must be non-empty with positive entries".into(),
            ));
        }
        if self.time_embed_dim % 2 != 0 {
            return Err(CoreError::InvalidConfig(
                "time_embed_dim must be even (sin/cos halves)".into(),
            ));
        }
        if self.subjects.is_empty() || self.sessions.is_empty() || self.n_classes == 0 {
            return Err(CoreError::InvalidConfig(
                "condition vocabulary must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Maps a condition key to embedding rows; errors on unknown ids.
    pub fn cond_index(&self, key: ConditionKey) -> Result<CondIndex> {
        match key {
            ConditionKey::Unconditional => Ok(CondIndex {
                subject: self.n_subjects(),
                session: self.n_sessions(),
                class: self.n_classes,
            }),
            ConditionKey::Real {
                subject,
                session,
                class,
            } => {
                let s = self
                    .subjects
                    .iter()
                    .position(|&id| id == subject)
                    .ok_or_else(|| {
                        CoreError::Condition(format!("subject {subject} not in model vocabulary"))
                    })?;
                let e = self
                    .sessions
                    .iter()
                    .position(|&id| id == session)
                    .ok_or_else(|| {
                        CoreError::Condition(format!("session {session} not in model vocabulary"))
                    })?;
                let c = class as usize;
                if c >= self.n_classes {
                    return Err(CoreError::Condition(format!(
                        "class index {c} out of range"
                    )));
                }
                Ok(CondIndex {
                    subject: s,
                    session: e,
                    class: c,
                })
            }
        }
    }

    /// Closed-form parameter count; guards architecture drift.
    pub fn param_count(&self) -> usize {
        let c = self.in_channels;
        let r = self.residual_channels;
        let s = self.skip_channels;
        let k = self.kernel_size;
        let dt = self.time_embed_dim;
        let dc = self.cond_embed_dim;
        let input = r * c + r;
        let time_mlp = 2 * (dt * dt + dt);
        let embeds = (self.n_subjects() + 1) * dc
            + (self.n_sessions() + 1) * dc
            + (self.n_classes + 1) * dc;
        let per_block = (2 * r * r * k + 2 * r)   // dilated conv
            + (dt * 2 * r + 2 * r)                // time projection
            + (dc * 2 * r + 2 * r)                // condition projection
            + (r * (r + s) + (r + s));            // residual/skip 1×1 split
        let head = s * s + s + s * c + c;
        input + time_mlp + embeds + self.n_blocks * per_block + head
    }

    /// Fresh parameters; deterministic for a given seed. The final output
    /// convolution is zero-initialized so an untrained net predicts 0.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        self.validate()?;
        let mut rng = seeding::rng_from(&[seed, 0x6d6f64656c]);
        let mut store = ParamStore::new();
        let c = self.in_channels;
        let r = self.residual_channels;
        let s = self.skip_channels;
        let k = self.kernel_size;
        let dt = self.time_embed_dim;
        let dc = self.cond_embed_dim;

        let fan = |n: usize| 1.0 / (n as f64).sqrt();

        store.insert("input.w", Tensor::randn(&[r, c, 1], fan(c), &mut rng));
        store.insert("input.b", Tensor::zeros(&[r]));

        store.insert("time_mlp.w1", Tensor::randn(&[dt, dt], fan(dt), &mut rng));
        store.insert("time_mlp.b1", Tensor::zeros(&[dt]));
        store.insert("time_mlp.w2", Tensor::randn(&[dt, dt], fan(dt), &mut rng));
        store.insert("time_mlp.b2", Tensor::zeros(&[dt]));

        store.insert(
            "embed.subject",
            Tensor::randn(&[self.n_subjects() + 1, dc], 0.1, &mut rng),
        );
        store.insert(
            "embed.session",
            Tensor::randn(&[self.n_sessions() + 1, dc], 0.1, &mut rng),
        );
        store.insert(
            "embed.class",
            Tensor::randn(&[self.n_classes + 1, dc], 0.1, &mut rng),
        );

        for i in 0..self.n_blocks {
            store.insert(
                &format!("block{i}.conv.w"),
                Tensor::randn(&[2 * r, r, k], fan(r * k), &mut rng),
            );
            store.insert(&format!("block{i}.conv.b"), Tensor::zeros(&[2 * r]));
            store.insert(
                &format!("block{i}.time.w"),
                Tensor::randn(&[dt, 2 * r], fan(dt), &mut rng),
            );
            store.insert(&format!("block{i}.time.b"), Tensor::zeros(&[2 * r]));
            store.insert(
                &format!("block{i}.cond.w"),
                Tensor::randn(&[dc, 2 * r], fan(dc), &mut rng),
            );
            store.insert(&format!("block{i}.cond.b"), Tensor::zeros(&[2 * r]));
            store.insert(
                &format!("block{i}.out.w"),
                Tensor::randn(&[r + s, r, 1], fan(r), &mut rng),
            );
            store.insert(&format!("block{i}.out.b"), Tensor::zeros(&[r + s]));
        }

        store.insert("head.w1", Tensor::randn(&[s, s, 1], fan(s), &mut rng));
        store.insert("head.b1", Tensor::zeros(&[s]));
        store.insert("head.w2", Tensor::zeros(&[c, s, 1]));
        store.insert("head.b2", Tensor::zeros(&[c]));
        Ok(store)
    }
}

/// Sinusoidal part of the time embedding (before the MLP):
/// `[sin(τ/10000^(2i/dim)), cos(τ/10000^(2i/dim))]` with `τ = t·time_scale`.
pub fn embed_time_pre_mlp(t: f64, dim: usize, time_scale: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CoreError::InvalidConfig(format!(
            "diffusion time {t} outside [0, 1]"
        )));
    }
    let tau = t * time_scale;
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[i] = (tau / freq).sin();
        out[half + i] = (tau / freq).cos();
    }
    Ok(out)
}

/// Parameter-name → graph-leaf binding for one forward/backward pass.
pub struct ParamBind {
    nodes: BTreeMap<String, NodeId>,
}

impl ParamBind {
    /// Inserts every parameter as a trainable leaf (training) or constant
    /// (inference).
    pub fn new<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, trainable: bool) -> Self {
        let mut nodes = BTreeMap::new();
        for (name, tensor) in store.iter() {
            let id = if trainable {
                g.leaf(tensor.clone())
            } else {
                g.constant(tensor.clone())
            };
            nodes.insert(name.clone(), id);
        }
        ParamBind { nodes }
    }

    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::Condition(format!("unbound parameter {name:?}")))
    }

    /// Collects gradients by parameter name after `backward`.
    pub fn grads<T: Scalar>(&self, g: &Graph<T>) -> BTreeMap<String, Tensor<T>> {
        self.nodes
            .iter()
            .filter_map(|(name, &id)| g.grad(id).map(|t| (name.clone(), t.clone())))
            .collect()
    }
}

/// Builds the embedded-time node `[B, time_embed_dim]` (sinusoid + MLP).
pub fn embed_time<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    bind: &ParamBind,
    t: &[f64],
) -> Result<NodeId> {
    let dim = cfg.time_embed_dim;
    let mut pre = Vec::with_capacity(t.len() * dim);
    for &ti in t {
        pre.extend(
            embed_time_pre_mlp(ti, dim, cfg.time_scale)?
                .into_iter()
                .map(T::from_f64),
        );
    }
    let pre = g.constant(Tensor::from_vec(&[t.len(), dim], pre)?);
    let h = g.matmul(pre, bind.get("time_mlp.w1")?)?;
    let h = g.bias_add(h, bind.get("time_mlp.b1")?)?;
    let h = g.silu(h);
    let h = g.matmul(h, bind.get("time_mlp.w2")?)?;
    g.bias_add(h, bind.get("time_mlp.b2")?)
}

/// Builds the condition embedding `[B, cond_embed_dim]`: the sum of subject,
/// session, and class table rows.
pub fn embed_condition<T: Scalar>(
    g: &mut Graph<T>,
    bind: &ParamBind,
    conds: &[CondIndex],
) -> Result<NodeId> {
    let subj: Vec<usize> = conds.iter().map(|c| c.subject).collect();
    let sess: Vec<usize> = conds.iter().map(|c| c.session).collect();
    let class: Vec<usize> = conds.iter().map(|c| c.class).collect();
    let es = g.embedding_lookup(bind.get("embed.subject")?, &subj)?;
    let ee = g.embedding_lookup(bind.get("embed.session")?, &sess)?;
    let ec = g.embedding_lookup(bind.get("embed.class")?, &class)?;
    let sum = g.add(es, ee)?;
    g.add(sum, ec)
}

/// Full forward pass: `x [B, C, T]`, per-example diffusion times and
/// condition indices → predicted noise `[B, C, T]`.
pub fn score_forward<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    bind: &ParamBind,
    x: NodeId,
    t: &[f64],
    conds: &[CondIndex],
) -> Result<NodeId> {
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 3 || shape[1] != cfg.in_channels {
        return Err(CoreError::ShapeMismatch(format!(
            "score_forward expects [B, {}, T], got {shape:?}",
            cfg.in_channels
        )));
    }
    if shape[0] != t.len() || shape[0] != conds.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "batch {} but {} times / {} conditions",
            shape[0],
            t.len(),
            conds.len()
        )));
    }
    let r = cfg.residual_channels;
    let s = cfg.skip_channels;

    let te = embed_time(g, cfg, bind, t)?;
    let ce = embed_condition(g, bind, conds)?;

    let mut h = g.conv1d(x, bind.get("input.w")?, 1)?;
    h = g.bias_add(h, bind.get("input.b")?)?;

    let mut skip_sum: Option<NodeId> = None;
    for i in 0..cfg.n_blocks {
        let d = cfg.dilation(i);
        let z = g.conv1d(h, bind.get(&format!("block{i}.conv.w"))?, d)?;
        let z = g.bias_add(z, bind.get(&format!("block{i}.conv.b"))?)?;

        let tp = g.matmul(te, bind.get(&format!("block{i}.time.w"))?)?;
        let tp = g.bias_add(tp, bind.get(&format!("block{i}.time.b"))?)?;
        let cp = g.matmul(ce, bind.get(&format!("block{i}.cond.w"))?)?;
        let cp = g.bias_add(cp, bind.get(&format!("block{i}.cond.b"))?)?;
        let z = g.channel_add(z, tp)?;
        let z = g.channel_add(z, cp)?;

        let gate_in = g.slice(z, 1, 0, r)?;
        let filt_in = g.slice(z, 1, r, 2 * r)?;
        let ta = g.tanh(gate_in);
        let sb = g.sigmoid(filt_in);
        let gated = g.mul(ta, sb)?;

        let o = g.conv1d(gated, bind.get(&format!("block{i}.out.w"))?, 1)?;
        let o = g.bias_add(o, bind.get(&format!("block{i}.out.b"))?)?;
        let res = g.slice(o, 1, 0, r)?;
        let skip = g.slice(o, 1, r, r + s)?;
        h = g.add(h, res)?;
        skip_sum = Some(match skip_sum {
            Some(acc) => g.add(acc, skip)?,
            None => skip,
        });
    }

    let sk = skip_sum.expect("n_blocks ≥ 1 is validated");
    let sk = g.silu(sk);
    let sk = g.conv1d(sk, bind.get("head.w1")?, 1)?;
    let sk = g.bias_add(sk, bind.get("head.b1")?)?;
    let sk = g.silu(sk);
    let out = g.conv1d(sk, bind.get("head.w2")?, 1)?;
    g.bias_add(out, bind.get("head.b2")?)
}
