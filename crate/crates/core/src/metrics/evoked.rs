//! Evoked responses and the peak/diversity metrics built on them.

use ndarray::Array2;

use crate::data::ConditionKey;
use crate::error::CoreError;
use crate::signal::EpochSet;
use crate::Result;

/// Per-condition average over epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvokedResponse {
    /// `[channels × samples]`, µV.
    pub data: Array2<f64>,
    pub n_epochs: usize,
    pub fs: f64,
}

/// Arithmetic mean over the epochs of one condition.
pub fn evoked(set: &EpochSet, condition: ConditionKey) -> Result<EvokedResponse> {
    evoked_of(&set.of_condition(condition))
}

/// Arithmetic mean over every epoch in the set.
pub fn evoked_of(set: &EpochSet) -> Result<EvokedResponse> {
    if set.is_empty() {
        return Err(CoreError::Metric(
            "evoked response of an empty epoch set".into(),
        ));
    }
    let mut acc = Array2::<f64>::zeros((set.n_channels(), set.epoch_len()));
    for e in set.epochs() {
        acc.zip_mut_with(&e.data, |a, &b| *a += b as f64);
    }
    acc /= set.n_epochs() as f64;
    Ok(EvokedResponse {
        data: acc,
        n_epochs: set.n_epochs(),
        fs: set.fs(),
    })
}

/// Optional peak search window in seconds; `None` spans the whole epoch.
pub type PeakWindow = Option<(f64, f64)>;

fn window_range(window: PeakWindow, fs: f64, epoch_len: usize) -> Result<(usize, usize)> {
    match window {
        None => Ok((0, epoch_len)),
        Some((lo, hi)) => {
            let a = (lo * fs).round() as usize;
            let b = ((hi * fs).round() as usize).min(epoch_len);
            if a >= b {
                return Err(CoreError::InvalidConfig(format!(
                    "empty peak window {lo}..{hi} s at {fs} Hz"
                )));
            }
            Ok((a, b))
        }
    }
}

/// Highest peak (value, sample index) of one channel within the window.
fn peak(ev: &EvokedResponse, channel: usize, window: PeakWindow) -> Result<(f64, usize)> {
    if channel >= ev.data.nrows() {
        return Err(CoreError::Metric(format!(
            "channel {channel} out of range 0..{}",
            ev.data.nrows()
        )));
    }
    let (a, b) = window_range(window, ev.fs, ev.data.ncols())?;
    let row = ev.data.row(channel);
    let mut best = (f64::NEG_INFINITY, a);
    for t in a..b {
        if row[t] > best.0 {
            best = (row[t], t);
        }
    }
    Ok(best)
}

/// Channel with the most prominent positive peak of the evoked response over
/// all epochs in `real_target` (argmax over channels of the windowed max).
pub fn select_p300_channel(real_target: &EpochSet, window: PeakWindow) -> Result<usize> {
    let ev = evoked_of(real_target)?;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for ch in 0..ev.data.nrows() {
        let (v, _) = peak(&ev, ch, window)?;
        if v > best.0 {
            best = (v, ch);
        }
    }
    Ok(best.1)
}

/// Peak amplitude delta: |max(real) − max(gen)| at the selected channel, µV.
pub fn pad(
    real_evoked: &EvokedResponse,
    gen_evoked: &EvokedResponse,
    channel: usize,
    window: PeakWindow,
) -> Result<f64> {
    let (r, _) = peak(real_evoked, channel, window)?;
    let (g, _) = peak(gen_evoked, channel, window)?;
    Ok((r - g).abs())
}

/// Peak latency delta in seconds (divide the sample offset by fs).
pub fn pld(
    real_evoked: &EvokedResponse,
    gen_evoked: &EvokedResponse,
    channel: usize,
    window: PeakWindow,
) -> Result<f64> {
    if (real_evoked.fs - gen_evoked.fs).abs() > 1e-9 {
        return Err(CoreError::Metric(format!(
            "sampling rates differ: {} vs {}",
            real_evoked.fs, gen_evoked.fs
        )));
    }
    let (_, tr) = peak(real_evoked, channel, window)?;
    let (_, tg) = peak(gen_evoked, channel, window)?;
    Ok((tr as f64 - tg as f64).abs() / real_evoked.fs)
}

/// Standard-deviation Manhattan distance: per channel, std over all epochs
/// and time points pooled; mean over channels of |std_a − std_b|, µV.
pub fn sd_md(a: &EpochSet, b: &EpochSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::Metric("sd_md requires non-empty sets".into()));
    }
    if a.n_channels() != b.n_channels() {
        return Err(CoreError::ShapeMismatch(format!(
            "sd_md: {} vs {} channels",
            a.n_channels(),
            b.n_channels()
        )));
    }
    let stds = |s: &EpochSet| -> Vec<f64> {
        let n = (s.n_epochs() * s.epoch_len()) as f64;
        (0..s.n_channels())
            .map(|ch| {
                let mut sum = 0.0f64;
                let mut sumsq = 0.0f64;
                for e in s.epochs() {
                    for &v in e.data.row(ch) {
                        sum += v as f64;
                        sumsq += (v as f64) * (v as f64);
                    }
                }
                let mean = sum / n;
                (sumsq / n - mean * mean).max(0.0).sqrt()
            })
            .collect()
    };
    let sa = stds(a);
    let sb = stds(b);
    Ok(sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / sa.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bump_channels, generate_synthetic, ClassLabel, SyntheticSpec};
    use crate::signal::{ChannelLayout, Epoch};

    fn single(data: Vec<f32>, ch: usize, t: usize, cond: ConditionKey) -> EpochSet {
        let mut set = EpochSet::empty(128.0, ChannelLayout::generic(ch), t);
        set.push(Epoch {
            data: Array2::from_shape_vec((ch, t), data).unwrap(),
            condition: cond,
        })
        .unwrap();
        set
    }

    fn cond() -> ConditionKey {
        ConditionKey::real(1, 1, ClassLabel::Target)
    }

    #[test]
    fn single_epoch_evoked_is_identity() {
        let set = single(vec![1.0, 2.0, 3.0, 4.0], 2, 2, cond());
        let ev = evoked(&set, cond()).unwrap();
        assert_eq!(ev.n_epochs, 1);
        assert_eq!(ev.data[[0, 1]], 2.0);
        assert_eq!(ev.data[[1, 0]], 3.0);
    }

    #[test]
    fn opposite_epochs_cancel() {
        let mut set = single(vec![1.0, -2.0, 3.0, -4.0], 2, 2, cond());
        set.push(Epoch {
            data: Array2::from_shape_vec((2, 2), vec![-1.0, 2.0, -3.0, 4.0]).unwrap(),
            condition: cond(),
        })
        .unwrap();
        let ev = evoked(&set, cond()).unwrap();
        assert!(ev.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synthetic_evoked_peak_matches_generator() {
        let spec = SyntheticSpec {
            n_subjects: 1,
            sessions_per_subject: 1,
            epochs_per_condition: 400,
            n_channels: 4,
            fs: 64.0,
            p300_amp_uv: vec![8.0],
            p300_latency_s: vec![0.3],
            noise_std_uv: 1.0,
            noise_ar: 0.0,
            seed: 6,
            ..Default::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        let ev = evoked(&set, cond()).unwrap();
        let ch = bump_channels(4)[0].0;
        let peak = ev.data.row(ch).iter().cloned().fold(f64::MIN, f64::max);
        assert!((peak - 8.0).abs() < 0.25, "evoked peak {peak}");
    }

    #[test]
    fn empty_condition_errors() {
        let set = EpochSet::empty(128.0, ChannelLayout::generic(1), 4);
        assert!(evoked_of(&set).is_err());
    }

    #[test]
    fn channel_selection_prefers_heaviest_bump() {
        let spec = SyntheticSpec {
            n_subjects: 1,
            sessions_per_subject: 1,
            epochs_per_condition: 300,
            n_channels: 6,
            fs: 64.0,
            p300_amp_uv: vec![8.0],
            p300_latency_s: vec![0.3],
            noise_std_uv: 0.5,
            noise_ar: 0.0,
            seed: 8,
            ..Default::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        let targets = set.of_condition(cond());
        let picked = select_p300_channel(&targets, None).unwrap();
        assert_eq!(picked, bump_channels(6)[0].0);
    }

    #[test]
    fn single_channel_selects_zero() {
        let set = single(vec![0.5, 1.0, 0.25, 0.0], 1, 4, cond());
        assert_eq!(select_p300_channel(&set, None).unwrap(), 0);
    }

    #[test]
    fn pad_and_pld_identity_and_offsets() {
        let real = single(vec![0.0, 8.0, 0.0, 0.0], 1, 4, cond());
        let ev_r = evoked_of(&real).unwrap();
        assert_eq!(pad(&ev_r, &ev_r, 0, None).unwrap(), 0.0);
        assert_eq!(pld(&ev_r, &ev_r, 0, None).unwrap(), 0.0);

        let gen = single(vec![0.0, 0.0, 0.0, 6.5], 1, 4, cond());
        let ev_g = evoked_of(&gen).unwrap();
        assert!((pad(&ev_r, &ev_g, 0, None).unwrap() - 1.5).abs() < 1e-9);
        // Peaks 2 samples apart at 128 Hz → 15.625 ms.
        assert!((pld(&ev_r, &ev_g, 0, None).unwrap() - 2.0 / 128.0).abs() < 1e-12);
    }

    #[test]
    fn peak_window_limits_search() {
        // Big early artifact outside [0.2, 0.5] s must be ignored.
        let mut data = vec![0.0f32; 128];
        data[2] = 100.0; // 0.016 s
        data[40] = 5.0; // 0.3125 s
        let set = single(data, 1, 128, cond());
        let ev = evoked_of(&set).unwrap();
        let window = Some((0.2, 0.5));
        let g = single(vec![0.0; 128], 1, 128, cond());
        let ev_g = evoked_of(&g).unwrap();
        assert!((pad(&ev, &ev_g, 0, window).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn sd_md_identity_scaling_and_triangle() {
        let spec = SyntheticSpec {
            n_subjects: 1,
            sessions_per_subject: 1,
            epochs_per_condition: 50,
            n_channels: 3,
            fs: 64.0,
            p300_amp_uv: vec![8.0],
            p300_latency_s: vec![0.3],
            noise_std_uv: 2.0,
            noise_ar: 0.5,
            seed: 17,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        assert!(sd_md(&a, &a).unwrap().abs() < 1e-12);

        // b = 2·a → sd_md equals the mean channel std of a.
        let mut b = EpochSet::empty(a.fs(), a.layout().clone(), a.epoch_len());
        for e in a.epochs() {
            b.push(Epoch {
                data: e.data.mapv(|v| 2.0 * v),
                condition: e.condition,
            })
            .unwrap();
        }
        let d = sd_md(&a, &b).unwrap();
        let self_std = sd_md(&a, &EpochSet::empty(a.fs(), a.layout().clone(), a.epoch_len()))
            .err()
            .map(|_| ());
        assert!(self_std.is_some(), "empty set must error");
        // Mean channel std of a, computed independently.
        let mut mean_std = 0.0;
        for ch in 0..3 {
            let vals: Vec<f64> = a
                .epochs()
                .iter()
                .flat_map(|e| e.data.row(ch).to_vec())
                .map(|v| v as f64)
                .collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            mean_std += (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt() / 3.0;
        }
        assert!((d - mean_std).abs() < 1e-9, "{d} vs {mean_std}");

        // Triangle-like bound with a third set.
        let spec_c = SyntheticSpec {
            seed: 18,
            noise_std_uv: 3.0,
            ..spec
        };
        let c = generate_synthetic(&spec_c).unwrap();
        let ab = sd_md(&a, &b).unwrap();
        let bc = sd_md(&b, &c).unwrap();
        let ac = sd_md(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-12);
    }
}
