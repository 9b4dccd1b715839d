//! Stratified train/validation splitting.

use rand::seq::SliceRandom;

use crate::data::ConditionKey;
use crate::error::CoreError;
use crate::seeding;
use crate::signal::EpochSet;
use crate::Result;

/// Splits per condition: every (subject, session, class) contributes
/// `round(n · val_fraction)` epochs (clamped to 1..n-1) to the validation
/// set. Deterministic given the seed; the two sets are disjoint and their
/// union is the input.
pub fn split_train_val(
    set: &EpochSet,
    val_fraction: f64,
    seed: u64,
) -> Result<(EpochSet, EpochSet)> {
    if !(0.0 < val_fraction && val_fraction < 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for cond in set.conditions() {
        let mut indices = set.indices_where(|c| c == cond);
        if indices.len() < 2 {
            return Err(CoreError::Condition(format!(
                "condition {cond} has {} epoch(s); at least 2 required to stratify",
                indices.len()
            )));
        }
        let (s, e, c) = match cond {
            ConditionKey::Real {
                subject,
                session,
                class,
            } => (subject, session, class as u64),
            ConditionKey::Unconditional => {
                return Err(CoreError::Condition(
                    "unconditional epochs cannot be split".into(),
                ))
            }
        };
        let mut rng = seeding::rng_from(&[seed, u64::from(s), u64::from(e), c, 0x51]);
        indices.shuffle(&mut rng);
        let n = indices.len();
        let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
        val_idx.extend_from_slice(&indices[..n_val]);
        train_idx.extend_from_slice(&indices[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((set.subset(&train_idx), set.subset(&val_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, ClassLabel, SyntheticSpec};
    use crate::signal::{ChannelLayout, Epoch};
    use ndarray::Array2;

    fn sample_set(epochs_per_condition: usize) -> EpochSet {
        let spec = SyntheticSpec {
            n_subjects: 2,
            epochs_per_condition,
            n_channels: 3,
            fs: 32.0,
            p300_amp_uv: vec![8.0, 9.0],
            p300_latency_s: vec![0.3, 0.35],
            seed: 21,
            ..Default::default()
        };
        generate_synthetic(&spec).unwrap()
    }

    #[test]
    fn exact_fraction_per_condition() {
        let set = sample_set(100);
        let (train, val) = split_train_val(&set, 0.1, 4).unwrap();
        for cond in set.conditions() {
            assert_eq!(train.count_condition(cond), 90, "{cond}");
            assert_eq!(val.count_condition(cond), 10, "{cond}");
        }
        assert_eq!(train.n_epochs() + val.n_epochs(), set.n_epochs());
    }

    #[test]
    fn same_seed_same_split() {
        let set = sample_set(20);
        let (t1, v1) = split_train_val(&set, 0.25, 7).unwrap();
        let (t2, v2) = split_train_val(&set, 0.25, 7).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
        let (t3, _) = split_train_val(&set, 0.25, 8).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn disjoint_union_property() {
        let set = sample_set(17);
        let (train, val) = split_train_val(&set, 0.3, 2).unwrap();
        // Union as multiset of data payloads equals input.
        let mut all: Vec<Vec<u8>> = train
            .epochs()
            .iter()
            .chain(val.epochs())
            .map(|e| e.data.iter().flat_map(|v| v.to_le_bytes()).collect())
            .collect();
        let mut orig: Vec<Vec<u8>> = set
            .epochs()
            .iter()
            .map(|e| e.data.iter().flat_map(|v| v.to_le_bytes()).collect())
            .collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn single_epoch_condition_errors() {
        let mut set = EpochSet::empty(32.0, ChannelLayout::generic(1), 4);
        set.push(Epoch {
            data: Array2::zeros((1, 4)),
            condition: crate::data::ConditionKey::real(1, 1, ClassLabel::Target),
        })
        .unwrap();
        set.push(Epoch {
            data: Array2::zeros((1, 4)),
            condition: crate::data::ConditionKey::real(1, 1, ClassLabel::NonTarget),
        })
        .unwrap();
        set.push(Epoch {
            data: Array2::zeros((1, 4)),
            condition: crate::data::ConditionKey::real(1, 1, ClassLabel::NonTarget),
        })
        .unwrap();
        let err = split_train_val(&set, 0.5, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s01/sess1/target"), "message was {msg}");
    }

    #[test]
    fn bad_fraction_rejected() {
        let set = sample_set(10);
        assert!(split_train_val(&set, 0.0, 1).is_err());
        assert!(split_train_val(&set, 1.0, 1).is_err());
    }
}
