//! Between-session variability baselines and the FID reference protocols.

use rand::seq::SliceRandom;

use crate::data::{ClassLabel, ConditionKey};
use crate::error::CoreError;
use crate::seeding;
use crate::signal::EpochSet;
use crate::Result;

use super::evoked::{evoked_of, pad, pld, sd_md, PeakWindow};
use super::fid::fid;
use super::fx::FeatureExtractor;
use super::swd::swd;

/// Metrics that admit a between-session baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairMetric {
    Swd { n_projections: usize, seed: u64 },
    Pad { channel: usize, window: PeakWindow },
    Pld { channel: usize, window: PeakWindow },
    SdMd,
}

impl PairMetric {
    pub fn name(&self) -> &'static str {
        match self {
            PairMetric::Swd { .. } => "swd",
            PairMetric::Pad { .. } => "pad",
            PairMetric::Pld { .. } => "pld",
            PairMetric::SdMd => "sdmd",
        }
    }

    /// Applies the metric to two epoch sets of the same condition.
    pub fn apply(&self, a: &EpochSet, b: &EpochSet) -> Result<f64> {
        match *self {
            PairMetric::Swd {
                n_projections,
                seed,
            } => swd(a, b, n_projections, seed),
            PairMetric::Pad { channel, window } => {
                pad(&evoked_of(a)?, &evoked_of(b)?, channel, window)
            }
            PairMetric::Pld { channel, window } => {
                pld(&evoked_of(a)?, &evoked_of(b)?, channel, window)
            }
            PairMetric::SdMd => sd_md(a, b),
        }
    }

    /// PAD and PLD are defined on target trials only.
    pub fn target_only(&self) -> bool {
        matches!(self, PairMetric::Pad { .. } | PairMetric::Pld { .. })
    }
}

/// One (subject, class) between-session measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEntry {
    pub subject: u32,
    pub class: ClassLabel,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineResult {
    pub entries: Vec<BaselineEntry>,
    pub warnings: Vec<String>,
}

impl BaselineResult {
    /// Unweighted mean over all entries.
    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.iter().map(|e| e.value).sum::<f64>() / self.entries.len() as f64)
        }
    }

    /// Mean over entries of one class.
    pub fn mean_of(&self, class: ClassLabel) -> Option<f64> {
        let v: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.class == class)
            .map(|e| e.value)
            .collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }

    pub fn per_subject(&self, subject: u32) -> Option<f64> {
        let v: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.subject == subject)
            .map(|e| e.value)
            .collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }
}

/// Applies `metric` between session 1 and session 2 of every subject (per
/// class where applicable); subjects missing a session are excluded with a
/// warning.
pub fn between_session_baseline(real: &EpochSet, metric: PairMetric) -> Result<BaselineResult> {
    let sessions = real.sessions();
    if sessions.len() < 2 {
        return Err(CoreError::Metric(format!(
            "between-session baseline needs two sessions, found {sessions:?}"
        )));
    }
    let (s1, s2) = (sessions[0], sessions[1]);
    let classes: &[ClassLabel] = if metric.target_only() {
        &[ClassLabel::Target]
    } else {
        &ClassLabel::ALL
    };
    let mut out = BaselineResult::default();
    for subject in real.subjects() {
        for &class in classes {
            let a = real.of_condition(ConditionKey::real(subject, s1, class));
            let b = real.of_condition(ConditionKey::real(subject, s2, class));
            if a.is_empty() || b.is_empty() {
                out.warnings.push(format!(
                    "s{subject:02}/{class}: missing a session, excluded from the {} baseline",
                    metric.name()
                ));
                continue;
            }
            out.entries.push(BaselineEntry {
                subject,
                class,
                value: metric.apply(&a, &b)?,
            });
        }
    }
    if out.entries.is_empty() {
        return Err(CoreError::Metric(format!(
            "no subject has both sessions for the {} baseline",
            metric.name()
        )));
    }
    Ok(out)
}

/// Mean FID over `repeats` random half-splits of the real data.
pub fn fid_random_half(
    real: &EpochSet,
    fx: &FeatureExtractor,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    if real.n_epochs() < 2 * (fx.feature_dim() + 1) {
        return Err(CoreError::Metric(format!(
            "random-half FID needs ≥ {} epochs, got {}",
            2 * (fx.feature_dim() + 1),
            real.n_epochs()
        )));
    }
    let mut acc = 0.0;
    for rep in 0..repeats {
        let mut idx: Vec<usize> = (0..real.n_epochs()).collect();
        let mut rng = seeding::rng_from(&[seed, rep as u64, 0xf1d]);
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        let a = real.subset(&idx[..half]);
        let b = real.subset(&idx[half..]);
        acc += fid(&a, &b, fx)?;
    }
    Ok(acc / repeats as f64)
}

/// FID between session 1 and session 2 across all subjects.
pub fn fid_between_sessions(real: &EpochSet, fx: &FeatureExtractor) -> Result<f64> {
    let sessions = real.sessions();
    if sessions.len() < 2 {
        return Err(CoreError::Metric(
            "cross-session FID needs two sessions".into(),
        ));
    }
    let a = real.subset(&real.indices_where(|c| c.session() == Some(sessions[0])));
    let b = real.subset(&real.indices_where(|c| c.session() == Some(sessions[1])));
    fid(&a, &b, fx)
}

/// FID between the first half of the sorted subject list and the rest.
pub fn fid_subject_split(real: &EpochSet, fx: &FeatureExtractor) -> Result<f64> {
    let subjects = real.subjects();
    if subjects.len() < 2 {
        return Err(CoreError::Metric(
            "subject-split FID needs at least two subjects".into(),
        ));
    }
    let cut = subjects.len().div_ceil(2);
    let first: Vec<u32> = subjects[..cut].to_vec();
    let a = real.subset(&real.indices_where(|c| {
        c.subject().map(|s| first.contains(&s)).unwrap_or(false)
    }));
    let b = real.subset(&real.indices_where(|c| {
        c.subject().map(|s| !first.contains(&s)).unwrap_or(false)
    }));
    fid(&a, &b, fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bump_channels, generate_synthetic, SyntheticSpec};
    use crate::signal::Epoch;

    fn shifted_sessions(seed: u64) -> EpochSet {
        generate_synthetic(&SyntheticSpec {
            n_subjects: 2,
            sessions_per_subject: 2,
            epochs_per_condition: 300,
            n_channels: 4,
            fs: 64.0,
            p300_amp_uv: vec![10.0, 12.0],
            p300_latency_s: vec![0.3, 0.4],
            session_amp_scale: 0.8,
            session_latency_offset_s: 2.0 / 64.0,
            noise_std_uv: 1.0,
            noise_ar: 0.0,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    /// A copy of session 1 re-labelled as session 2.
    fn cloned_sessions(seed: u64) -> EpochSet {
        let one = generate_synthetic(&SyntheticSpec {
            n_subjects: 1,
            sessions_per_subject: 1,
            epochs_per_condition: 50,
            n_channels: 3,
            fs: 64.0,
            p300_amp_uv: vec![8.0],
            p300_latency_s: vec![0.3],
            seed,
            ..Default::default()
        })
        .unwrap();
        let mut both = EpochSet::empty(one.fs(), one.layout().clone(), one.epoch_len());
        for e in one.epochs() {
            both.push(e.clone()).unwrap();
            let c = e.condition;
            both.push(Epoch {
                data: e.data.clone(),
                condition: ConditionKey::real(c.subject().unwrap(), 2, c.class().unwrap()),
            })
            .unwrap();
        }
        both
    }

    #[test]
    fn identical_sessions_give_zero_baselines() {
        let set = cloned_sessions(1);
        let ch = bump_channels(3)[0].0;
        for metric in [
            PairMetric::Swd {
                n_projections: 64,
                seed: 0,
            },
            PairMetric::Pad {
                channel: ch,
                window: None,
            },
            PairMetric::Pld {
                channel: ch,
                window: None,
            },
            PairMetric::SdMd,
        ] {
            let out = between_session_baseline(&set, metric).unwrap();
            let m = out.mean().unwrap();
            assert!(m.abs() < 1e-9, "{} baseline {m}", metric.name());
        }
    }

    #[test]
    fn session_shift_shows_in_pad_and_pld() {
        let set = shifted_sessions(2);
        let ch = bump_channels(4)[0].0;
        // amp ×0.8 → PAD ≈ 0.2·amp per subject; mean over (10, 12) µV → 2.2.
        let pad_out = between_session_baseline(
            &set,
            PairMetric::Pad {
                channel: ch,
                window: None,
            },
        )
        .unwrap();
        let pad_mean = pad_out.mean().unwrap();
        assert!(
            (pad_mean - 2.2).abs() < 0.3,
            "between-session PAD {pad_mean}"
        );
        // +2 samples at 64 Hz → 31.25 ms.
        let pld_out = between_session_baseline(
            &set,
            PairMetric::Pld {
                channel: ch,
                window: None,
            },
        )
        .unwrap();
        let pld_mean = pld_out.mean().unwrap();
        assert!(
            (pld_mean - 2.0 / 64.0).abs() < 1e-9,
            "between-session PLD {pld_mean} s"
        );
    }

    #[test]
    fn missing_session_excluded_with_warning() {
        let mut set = shifted_sessions(3);
        // Add a subject with session 1 only.
        for class in ClassLabel::ALL {
            for _ in 0..5 {
                set.push(Epoch {
                    data: ndarray::Array2::zeros((4, 64)),
                    condition: ConditionKey::real(7, 1, class),
                })
                .unwrap();
            }
        }
        let out = between_session_baseline(&set, PairMetric::SdMd).unwrap();
        assert!(out.warnings.iter().any(|w| w.contains("s07")));
        assert_eq!(out.entries.len(), 4); // 2 subjects × 2 classes
    }

    #[test]
    fn target_only_metrics_skip_nontarget() {
        let set = shifted_sessions(4);
        let out = between_session_baseline(
            &set,
            PairMetric::Pad {
                channel: 1,
                window: None,
            },
        )
        .unwrap();
        assert!(out.entries.iter().all(|e| e.class == ClassLabel::Target));
    }
}
