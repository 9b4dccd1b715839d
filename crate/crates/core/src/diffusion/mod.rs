//! Variance-preserving SDE schedule, guidance-dropout training, and
//! predictor-corrector sampling.

mod sample;
mod train;

pub use sample::{
    guided_eps, pc_sample, sample_condition, sample_matched, EpsModel, ScoreEps,
};
pub use train::{load_score_checkpoint, write_training_log, LogRow, TrainConfig, Trainer};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Lower integration cutoff: avoids the σ(0) = 0 division.
pub const T_EPS: f64 = 1e-5;

/// Linear-β variance-preserving schedule:
/// `β(t) = β_min + t·(β_max − β_min)` on `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        VpSchedule {
            beta_min: 0.1,
            beta_max: 20.0,
        }
    }
}

impl VpSchedule {
    pub fn new(beta_min: f64, beta_max: f64) -> Result<Self> {
        let s = VpSchedule { beta_min, beta_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta_min && self.beta_min < self.beta_max) {
            return Err(CoreError::InvalidConfig(format!(
                "schedule requires 0 < β_min < β_max, got {} / {}",
                self.beta_min, self.beta_max
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// Perturbation-kernel coefficients at time `t`:
    /// `m(t) = exp(−¼t²(β_max−β_min) − ½t·β_min)`, `σ(t) = √(1 − m²)`,
    /// so `x_t = m(t)·x_0 + σ(t)·z` with `z ~ N(0, I)`.
    pub fn marginal(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(CoreError::InvalidConfig(format!(
                "diffusion time {t} outside [0, 1]"
            )));
        }
        let log_m = -0.25 * t * t * (self.beta_max - self.beta_min) - 0.5 * t * self.beta_min;
        let m = log_m.exp();
        let sigma = (1.0 - m * m).max(0.0).sqrt();
        Ok((m, sigma))
    }
}

/// Sampler parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Predictor discretization count.
    pub n_steps: usize,
    /// Classifier-free guidance scale `w ≥ 0`.
    pub guidance_scale: f64,
    /// Corrector signal-to-noise ratio `r > 0`.
    pub corrector_snr: f64,
    /// Langevin steps per predictor step.
    pub corrector_steps: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n_steps: 1000,
            guidance_scale: 1.0,
            corrector_snr: 0.16,
            corrector_steps: 1,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(CoreError::InvalidConfig("n_steps must be ≥ 1".into()));
        }
        if self.guidance_scale < 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "guidance scale must be ≥ 0, got {}",
                self.guidance_scale
            )));
        }
        if self.corrector_snr <= 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "corrector snr must be > 0, got {}",
                self.corrector_snr
            )));
        }
        Ok(())
    }
}

/// Shape/rate descriptor of the data a model was trained on; lets a
/// checkpoint be sampled without the original container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataDesc {
    pub fs: f64,
    pub epoch_len: usize,
    pub channels: Vec<String>,
}

/// Checkpoint JSON header shared by trainer and sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub kind: String,
    pub step: u64,
    pub model: crate::model::ModelConfig,
    pub schedule: VpSchedule,
    #[serde(default)]
    pub data: Option<DataDesc>,
}

pub const CHECKPOINT_KIND_SCORE: &str = "erpdiff-score";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_endpoints() {
        let s = VpSchedule::default();
        let (m0, s0) = s.marginal(0.0).unwrap();
        assert_eq!(m0, 1.0);
        assert_eq!(s0, 0.0);

        // t = 1, β = (0.1, 20): m = exp(−5.025), σ ≈ 0.99998.
        let (m1, s1) = s.marginal(1.0).unwrap();
        assert!((m1 - (-5.025f64).exp()).abs() < 1e-12);
        assert!((m1 - 6.56e-3).abs() < 5e-5);
        assert!((s1 - 0.99998).abs() < 1e-5);
    }

    #[test]
    fn marginal_matches_variance_ode() {
        // Independent route: integrate dm/dt = −½β(t)m with RK4 and compare.
        let s = VpSchedule::default();
        let n = 20_000usize;
        let dt = 1.0 / n as f64;
        let mut m = 1.0f64;
        for i in 0..n {
            let t = i as f64 * dt;
            let f = |t: f64, m: f64| -0.5 * s.beta(t) * m;
            let k1 = f(t, m);
            let k2 = f(t + dt / 2.0, m + dt / 2.0 * k1);
            let k3 = f(t + dt / 2.0, m + dt / 2.0 * k2);
            let k4 = f(t + dt, m + dt * k3);
            m += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let (m_closed, _) = s.marginal(1.0).unwrap();
        assert!(
            (m - m_closed).abs() < 1e-4,
            "ODE {m} vs closed form {m_closed}"
        );
    }

    #[test]
    fn mean_coefficient_strictly_decreasing() {
        let s = VpSchedule::default();
        let mut prev = f64::INFINITY;
        for k in 0..=1000 {
            let (m, sigma) = s.marginal(k as f64 / 1000.0).unwrap();
            assert!(m < prev, "m not strictly decreasing at {k}");
            assert!((0.0..=1.0).contains(&m));
            assert!((0.0..=1.0).contains(&sigma));
            prev = m;
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(VpSchedule::new(0.0, 1.0).is_err());
        assert!(VpSchedule::new(2.0, 1.0).is_err());
        let s = VpSchedule::default();
        assert!(s.marginal(-0.1).is_err());
        assert!(s.marginal(1.1).is_err());
    }
}
