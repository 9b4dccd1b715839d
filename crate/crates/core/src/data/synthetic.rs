//! Seeded synthetic ERP datasets: AR(1) channel noise plus a Gaussian-shaped
//! positive deflection on designated posterior channels for target epochs.
//!
//! The generator doubles as a ground-truth oracle: every statistic of its
//! output (evoked peak, latency, channel std) is known by construction.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, ConditionKey};
use crate::error::CoreError;
use crate::seeding;
use crate::signal::{ChannelLayout, Epoch, EpochSet};
use crate::Result;

/// Parameters of the synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub sessions_per_subject: usize,
    /// Epochs generated per (subject, session, class).
    pub epochs_per_condition: usize,
    pub n_channels: usize,
    pub fs: f64,
    pub epoch_seconds: f64,
    /// Target-class bump peak amplitude per subject, µV.
    pub p300_amp_uv: Vec<f64>,
    /// Bump latency per subject, seconds.
    pub p300_latency_s: Vec<f64>,
    /// Gaussian bump width (std), seconds.
    pub p300_width_s: f64,
    /// Session 2 scales the whole epoch (noise and bump) by this factor.
    pub session_amp_scale: f64,
    /// Session 2 shifts the bump latency by this offset, seconds.
    pub session_latency_offset_s: f64,
    /// AR(1) innovation std, µV; stationary std is `noise_std/sqrt(1-a²)`.
    pub noise_std_uv: f64,
    /// AR(1) coefficient, `0 ≤ a < 1`.
    pub noise_ar: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_subjects: 2,
            sessions_per_subject: 2,
            epochs_per_condition: 100,
            n_channels: 19,
            fs: 128.0,
            epoch_seconds: 1.0,
            p300_amp_uv: vec![8.0, 9.0],
            p300_latency_s: vec![0.30, 0.34],
            p300_width_s: 0.05,
            session_amp_scale: 0.8,
            session_latency_offset_s: 2.0 / 128.0,
            noise_std_uv: 2.0,
            noise_ar: 0.95,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn epoch_len(&self) -> usize {
        (self.epoch_seconds * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.sessions_per_subject == 0 || self.n_channels == 0 {
            return Err(CoreError::InvalidConfig(
                "subjects, sessions and channels must be positive".into(),
            ));
        }
        if self.p300_amp_uv.len() != self.n_subjects
            || self.p300_latency_s.len() != self.n_subjects
        {
            return Err(CoreError::InvalidConfig(format!(
                "p300_amp_uv/p300_latency_s must list one value per subject ({})",
                self.n_subjects
            )));
        }
        if !(0.0..1.0).contains(&self.noise_ar) {
            return Err(CoreError::InvalidConfig(format!(
                "noise_ar must be in [0, 1), got {}",
                self.noise_ar
            )));
        }
        let last_session_offset = if self.sessions_per_subject > 1 {
            self.session_latency_offset_s
        } else {
            0.0
        };
        for &lat in &self.p300_latency_s {
            let hi = lat + last_session_offset.max(0.0) + self.p300_width_s;
            let lo = lat + last_session_offset.min(0.0) - self.p300_width_s;
            if lo < 0.0 || hi > self.epoch_seconds {
                return Err(CoreError::InvalidConfig(format!(
                    "bump at {lat} s ± width {} s leaves the epoch window",
                    self.p300_width_s
                )));
            }
        }
        if self.noise_std_uv < 0.0 {
            return Err(CoreError::InvalidConfig("noise_std_uv negative".into()));
        }
        Ok(())
    }
}

/// Designated bump channels and their weights: the last three channels get
/// weights 1.0 / 0.7 / 0.5, so channel selection has a unique argmax.
pub fn bump_channels(n_channels: usize) -> Vec<(usize, f64)> {
    const WEIGHTS: [f64; 3] = [1.0, 0.7, 0.5];
    let take = n_channels.min(3);
    (0..take)
        .map(|i| (n_channels - take + i, WEIGHTS[i]))
        .collect()
}

/// Generates the full dataset; deterministic given the spec (per-condition
/// RNG streams are derived from the master seed, so conditions could be
/// generated in any order or in parallel without changing bytes).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EpochSet> {
    spec.validate()?;
    let epoch_len = spec.epoch_len();
    let layout = ChannelLayout::generic(spec.n_channels);
    let mut set = EpochSet::empty(spec.fs, layout, epoch_len);
    let bumps = bump_channels(spec.n_channels);

    for subject in 1..=spec.n_subjects as u32 {
        let amp = spec.p300_amp_uv[(subject - 1) as usize];
        let base_latency = spec.p300_latency_s[(subject - 1) as usize];
        for session in 1..=spec.sessions_per_subject as u32 {
            let scale = if session >= 2 {
                spec.session_amp_scale
            } else {
                1.0
            };
            let latency = if session >= 2 {
                base_latency + spec.session_latency_offset_s
            } else {
                base_latency
            };
            for (class_idx, class) in ClassLabel::ALL.iter().enumerate() {
                let mut rng = seeding::rng_from(&[
                    spec.seed,
                    u64::from(subject),
                    u64::from(session),
                    class_idx as u64,
                ]);
                for _ in 0..spec.epochs_per_condition {
                    let mut data = Array2::<f32>::zeros((spec.n_channels, epoch_len));
                    for ch in 0..spec.n_channels {
                        let mut prev = if spec.noise_ar > 0.0 {
                            // Start the chain in its stationary distribution.
                            let stat =
                                spec.noise_std_uv / (1.0 - spec.noise_ar * spec.noise_ar).sqrt();
                            rng.sample::<f64, _>(StandardNormal) * stat
                        } else {
                            rng.sample::<f64, _>(StandardNormal) * spec.noise_std_uv
                        };
                        data[[ch, 0]] = prev as f32;
                        for t in 1..epoch_len {
                            let innov: f64 = rng.sample(StandardNormal);
                            prev = spec.noise_ar * prev + innov * spec.noise_std_uv;
                            data[[ch, t]] = prev as f32;
                        }
                    }
                    if *class == ClassLabel::Target {
                        for &(ch, weight) in &bumps {
                            for t in 0..epoch_len {
                                let dt = t as f64 / spec.fs - latency;
                                let bump = amp
                                    * weight
                                    * (-dt * dt / (2.0 * spec.p300_width_s * spec.p300_width_s))
                                        .exp();
                                data[[ch, t]] += bump as f32;
                            }
                        }
                    }
                    if scale != 1.0 {
                        data.mapv_inplace(|v| v * scale as f32);
                    }
                    set.push(Epoch {
                        data,
                        condition: ConditionKey::real(subject, session, *class),
                    })?;
                }
            }
        }
    }
    Ok(set)
}
