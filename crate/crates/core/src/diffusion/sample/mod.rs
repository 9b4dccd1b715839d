//! Predictor-corrector sampling with classifier-free guidance.
//!
//! Every generated epoch owns an RNG stream derived from
//! (seed, subject, session, class, index), so results are bit-identical
//! regardless of batch chunking or thread scheduling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::ConditionKey;
use crate::error::CoreError;
use crate::model::{score_forward, ModelConfig, ParamBind};
use crate::seeding;
use crate::signal::{ChannelLayout, Epoch, EpochSet};
use crate::tensor::{Graph, ParamStore, Tensor};
use crate::Result;

use super::{SampleConfig, VpSchedule, T_EPS};

/// Noise predictor abstraction: the trained network in production, analytic
/// oracles in tests.
pub trait EpsModel: Sync {
    /// `x [B, C, T]`, per-example time and condition → ε̂ `[B, C, T]`.
    fn eps(&self, x: &Tensor<f32>, t: &[f64], conds: &[ConditionKey]) -> Result<Tensor<f32>>;
}

/// The score network as an [`EpsModel`]. Construct it over the parameter set
/// you mean to sample with — `ParamStore::ema_as_params()` for trained
/// checkpoints.
pub struct ScoreEps<'a> {
    pub cfg: &'a ModelConfig,
    pub params: &'a ParamStore<f32>,
}

impl EpsModel for ScoreEps<'_> {
    fn eps(&self, x: &Tensor<f32>, t: &[f64], conds: &[ConditionKey]) -> Result<Tensor<f32>> {
        let idx: Vec<_> = conds
            .iter()
            .map(|&c| self.cfg.cond_index(c))
            .collect::<Result<_>>()?;
        let mut g = Graph::new();
        let bind = ParamBind::new(&mut g, self.params, false);
        let xn = g.constant(x.clone());
        let out = score_forward(&mut g, self.cfg, &bind, xn, t, &idx)?;
        Ok(g.value(out).clone())
    }
}

/// Classifier-free guidance: `ε̃ = (1+w)·ε̂(x,t,c) − w·ε̂(x,t,∅)`.
/// `w = 0` returns the conditional prediction exactly (no second forward).
pub fn guided_eps(
    model: &dyn EpsModel,
    x: &Tensor<f32>,
    t: &[f64],
    cond: ConditionKey,
    w: f64,
) -> Result<Tensor<f32>> {
    if cond.is_unconditional() {
        return Err(CoreError::Condition(
            "guided_eps requires a real condition".into(),
        ));
    }
    let b = x.shape()[0];
    let conds = vec![cond; b];
    let eps_c = model.eps(x, t, &conds)?;
    if w == 0.0 {
        return Ok(eps_c);
    }
    let uncond = vec![ConditionKey::Unconditional; b];
    let eps_u = model.eps(x, t, &uncond)?;
    let mut out = eps_c;
    let (wp, wn) = ((1.0 + w) as f32, w as f32);
    for (o, &u) in out.data_mut().iter_mut().zip(eps_u.data()) {
        *o = wp * *o - wn * u;
    }
    Ok(out)
}

/// Runs the predictor-corrector chain for one batch; `rngs` carries one
/// stream per sample. Returns `[B, C, T]` in µV space.
///
/// Per step `t_i` (from 1 down to `T_EPS`): a reverse-diffusion ancestral
/// predictor step using `s = −ε̃/σ(t_i)`, then `corrector_steps` Langevin
/// steps at the post-predictor time with step size `δ = 2·(r·‖z‖/‖s‖)²`.
pub fn pc_sample(
    model: &dyn EpsModel,
    schedule: &VpSchedule,
    cfg: &SampleConfig,
    cond: ConditionKey,
    shape: (usize, usize),
    rngs: &mut [ChaCha8Rng],
) -> Result<Tensor<f32>> {
    cfg.validate()?;
    schedule.validate()?;
    let dt_probe = (1.0 - T_EPS) / cfg.n_steps as f64;
    if schedule.beta(1.0) * dt_probe >= 1.0 {
        return Err(CoreError::InvalidConfig(format!(
            "n_steps {} too coarse: discrete β = β_max·Δt = {:.3} must stay below 1",
            cfg.n_steps,
            schedule.beta(1.0) * dt_probe
        )));
    }
    let b = rngs.len();
    let (c, t_len) = shape;
    let n = c * t_len;

    let mut x = Tensor::<f32>::zeros(&[b, c, t_len]);
    for (i, rng) in rngs.iter_mut().enumerate() {
        for v in &mut x.data_mut()[i * n..(i + 1) * n] {
            *v = rng.sample::<f64, _>(StandardNormal) as f32;
        }
    }

    let dt = (1.0 - T_EPS) / cfg.n_steps as f64;
    let mut z = vec![0.0f32; b * n];
    for step in 0..cfg.n_steps {
        let t_cur = 1.0 - step as f64 * dt;
        let t_next = (t_cur - dt).max(T_EPS);

        // Predictor: x_mean = (x + β·s)/√(1−β), x = x_mean + √β·z.
        let eps = guided_eps(model, &x, &vec![t_cur; b], cond, cfg.guidance_scale)?;
        let (_, sigma) = schedule.marginal(t_cur)?;
        let beta = schedule.beta(t_cur) * dt;
        let inv_sqrt = 1.0 / (1.0 - beta).sqrt();
        let noise_scale = beta.sqrt();
        for (i, rng) in rngs.iter_mut().enumerate() {
            let xs = &mut x.data_mut()[i * n..(i + 1) * n];
            let es = &eps.data()[i * n..(i + 1) * n];
            for j in 0..n {
                let s = -(es[j] as f64) / sigma;
                let zj: f64 = rng.sample(StandardNormal);
                let mean = (xs[j] as f64 + beta * s) * inv_sqrt;
                xs[j] = (mean + noise_scale * zj) as f32;
            }
        }
        check_divergence(&x, step, t_cur)?;

        // Corrector: Langevin steps at the post-predictor time. The step
        // size δ = 2·(r·‖z‖/‖s‖)² uses batch-mean norms so it concentrates
        // instead of inheriting the heavy tail of a single draw.
        for _ in 0..cfg.corrector_steps {
            let eps = guided_eps(model, &x, &vec![t_next; b], cond, cfg.guidance_scale)?;
            let (_, sigma_n) = schedule.marginal(t_next)?;
            let mut z_norm_mean = 0.0f64;
            let mut s_norm_mean = 0.0f64;
            for (i, rng) in rngs.iter_mut().enumerate() {
                let es = &eps.data()[i * n..(i + 1) * n];
                let mut s_norm_sq = 0.0f64;
                let mut z_norm_sq = 0.0f64;
                for j in 0..n {
                    let zj: f64 = rng.sample(StandardNormal);
                    z[i * n + j] = zj as f32;
                    z_norm_sq += zj * zj;
                    let s = -(es[j] as f64) / sigma_n;
                    s_norm_sq += s * s;
                }
                z_norm_mean += z_norm_sq.sqrt() / b as f64;
                s_norm_mean += s_norm_sq.sqrt() / b as f64;
            }
            // A zero score carries no information; skip the move rather
            // than divide by zero.
            if s_norm_mean == 0.0 {
                continue;
            }
            let ratio = cfg.corrector_snr * z_norm_mean / s_norm_mean;
            let delta = 2.0 * ratio * ratio;
            let step_noise = (2.0 * delta).sqrt();
            for i in 0..b {
                let xs = &mut x.data_mut()[i * n..(i + 1) * n];
                let es = &eps.data()[i * n..(i + 1) * n];
                for j in 0..n {
                    let s = -(es[j] as f64) / sigma_n;
                    xs[j] = (xs[j] as f64 + delta * s + step_noise * z[i * n + j] as f64) as f32;
                }
            }
            check_divergence(&x, step, t_next)?;
        }
    }
    Ok(x)
}

fn check_divergence(x: &Tensor<f32>, step: usize, t: f64) -> Result<()> {
    let mut max = 0.0f32;
    for &v in x.data() {
        if !v.is_finite() {
            return Err(CoreError::SamplerDiverged(format!(
                "non-finite sample value at predictor step {step} (t = {t:.5})"
            )));
        }
        max = max.max(v.abs());
    }
    if max > 1e6 {
        return Err(CoreError::SamplerDiverged(format!(
            "max|x| = {max:.3e} µV at predictor step {step} (t = {t:.5})"
        )));
    }
    Ok(())
}

/// Generates `count` epochs of one condition using the network's EMA
/// weights, chunked to bound memory. With `corrector_steps = 0` chunking
/// never changes the samples; with correctors on, the shared Langevin step
/// size couples a chunk, so `max_batch` is part of the procedure identity.
#[allow(clippy::too_many_arguments)]
pub fn sample_condition(
    model_cfg: &ModelConfig,
    store: &ParamStore<f32>,
    schedule: &VpSchedule,
    cfg: &SampleConfig,
    cond: ConditionKey,
    count: usize,
    fs: f64,
    layout: &ChannelLayout,
    epoch_len: usize,
    max_batch: usize,
) -> Result<EpochSet> {
    let (subject, session, class) = match cond {
        ConditionKey::Real {
            subject,
            session,
            class,
        } => (subject, session, class),
        ConditionKey::Unconditional => {
            return Err(CoreError::Condition(
                "cannot sample the unconditional token".into(),
            ))
        }
    };
    model_cfg.cond_index(cond)?;
    let ema = store.ema_as_params();
    let model = ScoreEps {
        cfg: model_cfg,
        params: &ema,
    };
    let c = layout.count();
    let mut set = EpochSet::empty(fs, layout.clone(), epoch_len);
    let chunk = max_batch.max(1);
    let mut start = 0usize;
    while start < count {
        let b = chunk.min(count - start);
        let mut rngs: Vec<ChaCha8Rng> = (0..b)
            .map(|i| {
                seeding::rng_from(&[
                    cfg.seed,
                    u64::from(subject),
                    u64::from(session),
                    class as u64,
                    (start + i) as u64,
                ])
            })
            .collect();
        let batch = pc_sample(&model, schedule, cfg, cond, (c, epoch_len), &mut rngs)?;
        for i in 0..b {
            let data = ndarray::Array2::from_shape_vec(
                (c, epoch_len),
                batch.data()[i * c * epoch_len..(i + 1) * c * epoch_len].to_vec(),
            )
            .expect("chunk layout is [C, T]");
            set.push(Epoch {
                data,
                condition: cond,
            })?;
        }
        start += b;
    }
    Ok(set)
}

/// Generates exactly `count(real, condition)` epochs for every condition
/// present in `real`. Conditions run in parallel over independent RNG
/// streams; output order is sorted by condition, then sample index.
pub fn sample_matched(
    real: &EpochSet,
    model_cfg: &ModelConfig,
    store: &ParamStore<f32>,
    schedule: &VpSchedule,
    cfg: &SampleConfig,
    max_batch: usize,
) -> Result<EpochSet> {
    let conditions = real.conditions();
    for &cond in &conditions {
        model_cfg.cond_index(cond)?;
    }
    let parts: Vec<Result<EpochSet>> = conditions
        .par_iter()
        .map(|&cond| {
            sample_condition(
                model_cfg,
                store,
                schedule,
                cfg,
                cond,
                real.count_condition(cond),
                real.fs(),
                real.layout(),
                real.epoch_len(),
                max_batch,
            )
        })
        .collect();
    let mut out = EpochSet::empty(real.fs(), real.layout().clone(), real.epoch_len());
    for part in parts {
        for e in part?.epochs() {
            out.push(e.clone())?;
        }
    }
    Ok(out)
}
