//! Averaged balanced accuracy: subject/session-specific LDA performance
//! under within-session stratified cross-validation.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::data::ClassLabel;
use crate::error::CoreError;
use crate::seeding;
use crate::signal::EpochSet;
use crate::Result;

use super::lda::{balanced_accuracy, lda_features, lda_fit};

/// Behaviour knobs for the ABA computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbaConfig {
    pub folds: usize,
    /// Fixed shrinkage; `None` → Ledoit–Wolf per fit.
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl Default for AbaConfig {
    fn default() -> Self {
        AbaConfig {
            folds: 5,
            gamma: None,
            seed: 0,
        }
    }
}

/// Per-(subject, session) scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AbaUnit {
    pub subject: u32,
    pub session: u32,
    /// Trained on real training folds.
    pub baseline: f64,
    /// Trained on all generated epochs of this subject/session; absent when
    /// no generated set was supplied.
    pub generated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbaResult {
    pub units: Vec<AbaUnit>,
    pub skipped: Vec<String>,
}

impl AbaResult {
    pub fn baseline_mean(&self) -> Option<f64> {
        mean(self.units.iter().map(|u| u.baseline))
    }

    pub fn generated_mean(&self) -> Option<f64> {
        mean(self.units.iter().filter_map(|u| u.generated))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Runs per-subject/session stratified k-fold CV over real epochs. The
/// baseline arm trains on the real training folds; the generated arm (when
/// `gen` is given) trains on all generated epochs of the same
/// subject/session. Both arms are evaluated on the same real test folds. A
/// subject/session whose smaller class has fewer epochs than `folds` is
/// skipped with a warning entry.
pub fn aba(real: &EpochSet, gen: Option<&EpochSet>, cfg: &AbaConfig) -> Result<AbaResult> {
    if cfg.folds < 2 {
        return Err(CoreError::InvalidConfig(
            "cross-validation needs at least 2 folds".into(),
        ));
    }
    let (x, y) = lda_features(real)?;
    let mut result = AbaResult::default();

    for subject in real.subjects() {
        for session in real.sessions() {
            let unit_idx: Vec<usize> = real.indices_where(|c| {
                c.subject() == Some(subject) && c.session() == Some(session)
            });
            if unit_idx.is_empty() {
                continue;
            }
            let by_class = |class: ClassLabel| -> Vec<usize> {
                unit_idx
                    .iter()
                    .copied()
                    .filter(|&i| y[i] == class)
                    .collect()
            };
            let targets = by_class(ClassLabel::Target);
            let nontargets = by_class(ClassLabel::NonTarget);
            if targets.len() < cfg.folds || nontargets.len() < cfg.folds {
                result.skipped.push(format!(
                    "s{subject:02}/sess{session}: {} target / {} non-target epochs \
                     cannot fill {} folds",
                    targets.len(),
                    nontargets.len(),
                    cfg.folds
                ));
                continue;
            }

            // Stratified folds: shuffle each class, deal round-robin.
            let mut rng =
                seeding::rng_from(&[cfg.seed, u64::from(subject), u64::from(session), 0xaba]);
            let mut t_sh = targets.clone();
            let mut n_sh = nontargets.clone();
            t_sh.shuffle(&mut rng);
            n_sh.shuffle(&mut rng);

            // Generated-arm model: trained once on all generated epochs of
            // this subject/session.
            let gen_model = match gen {
                Some(gset) => {
                    let sub = gset.subset(&gset.indices_where(|c| {
                        c.subject() == Some(subject) && c.session() == Some(session)
                    }));
                    if sub.is_empty() {
                        return Err(CoreError::Condition(format!(
                            "generated set has no epochs for s{subject:02}/sess{session}"
                        )));
                    }
                    let (gx, gy) = lda_features(&sub)?;
                    Some(lda_fit(&gx, &gy, cfg.gamma)?)
                }
                None => None,
            };

            let mut fold_baseline = Vec::with_capacity(cfg.folds);
            let mut fold_generated = Vec::with_capacity(cfg.folds);
            for fold in 0..cfg.folds {
                let in_fold = |pos: usize| pos % cfg.folds == fold;
                let test: Vec<usize> = t_sh
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| in_fold(*p))
                    .map(|(_, &i)| i)
                    .chain(
                        n_sh.iter()
                            .enumerate()
                            .filter(|(p, _)| in_fold(*p))
                            .map(|(_, &i)| i),
                    )
                    .collect();
                let train: Vec<usize> = t_sh
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| !in_fold(*p))
                    .map(|(_, &i)| i)
                    .chain(
                        n_sh.iter()
                            .enumerate()
                            .filter(|(p, _)| !in_fold(*p))
                            .map(|(_, &i)| i),
                    )
                    .collect();

                let gather = |idx: &[usize]| -> (Array2<f64>, Vec<ClassLabel>) {
                    let mut m = Array2::zeros((idx.len(), x.ncols()));
                    let mut labels = Vec::with_capacity(idx.len());
                    for (r, &i) in idx.iter().enumerate() {
                        m.row_mut(r).assign(&x.row(i));
                        labels.push(y[i]);
                    }
                    (m, labels)
                };
                let (xtr, ytr) = gather(&train);
                let (xte, yte) = gather(&test);

                let base_model = lda_fit(&xtr, &ytr, cfg.gamma)?;
                fold_baseline.push(balanced_accuracy(&yte, &base_model.predict(&xte))?);
                if let Some(m) = &gen_model {
                    fold_generated.push(balanced_accuracy(&yte, &m.predict(&xte))?);
                }
            }

            result.units.push(AbaUnit {
                subject,
                session,
                baseline: fold_baseline.iter().sum::<f64>() / cfg.folds as f64,
                generated: gen.map(|_| {
                    fold_generated.iter().sum::<f64>() / cfg.folds as f64
                }),
            });
        }
    }
    if result.units.is_empty() {
        return Err(CoreError::Metric(format!(
            "no subject/session had both classes with ≥ {} epochs",
            cfg.folds
        )));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, ConditionKey, SyntheticSpec};
    use crate::signal::{ChannelLayout, Epoch};

    fn separable(seed: u64, epochs: usize) -> EpochSet {
        generate_synthetic(&SyntheticSpec {
            n_subjects: 2,
            sessions_per_subject: 2,
            epochs_per_condition: epochs,
            n_channels: 4,
            fs: 64.0,
            p300_amp_uv: vec![12.0, 14.0],
            p300_latency_s: vec![0.3, 0.4],
            noise_std_uv: 1.0,
            noise_ar: 0.2,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn separable_classes_near_perfect_both_arms() {
        let real = separable(1, 40);
        let out = aba(&real, Some(&real), &AbaConfig::default()).unwrap();
        assert_eq!(out.units.len(), 4);
        for u in &out.units {
            assert!(u.baseline >= 0.97, "baseline {u:?}");
            assert!(u.generated.unwrap() >= 0.97, "generated {u:?}");
        }
    }

    #[test]
    fn self_substitution_matches_baseline_within_margin() {
        // gen == real union: the generated arm sees the test folds during
        // training, so it scores at least baseline − 0.02.
        let real = separable(2, 30);
        let out = aba(&real, Some(&real), &AbaConfig::default()).unwrap();
        let base = out.baseline_mean().unwrap();
        let gen = out.generated_mean().unwrap();
        assert!(
            gen >= base - 0.02,
            "self-substitution ABA {gen} fell below baseline {base} − 0.02"
        );
    }

    #[test]
    fn small_units_skipped_with_warning() {
        let mut real = separable(3, 20);
        // Add a subject whose target class has only 3 epochs.
        for i in 0..7usize {
            let class = if i < 3 {
                ClassLabel::Target
            } else {
                ClassLabel::NonTarget
            };
            real.push(Epoch {
                data: ndarray::Array2::zeros((4, 64)),
                condition: ConditionKey::real(9, 1, class),
            })
            .unwrap();
        }
        let out = aba(&real, None, &AbaConfig::default()).unwrap();
        assert_eq!(out.units.len(), 4);
        assert_eq!(out.skipped.len(), 1);
        assert!(out.skipped[0].contains("s09/sess1"));
    }

    #[test]
    fn missing_generated_condition_is_an_error() {
        let real = separable(4, 20);
        let gen = real.subset(&real.indices_where(|c| c.subject() == Some(1)));
        assert!(matches!(
            aba(&real, Some(&gen), &AbaConfig::default()),
            Err(CoreError::Condition(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let real = separable(5, 25);
        let a = aba(&real, Some(&real), &AbaConfig::default()).unwrap();
        let b = aba(&real, Some(&real), &AbaConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_input_rejected() {
        let empty = EpochSet::empty(64.0, ChannelLayout::generic(4), 64);
        assert!(aba(&empty, None, &AbaConfig::default()).is_err());
    }
}
