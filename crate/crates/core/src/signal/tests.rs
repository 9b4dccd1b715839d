use super::*;
use crate::data::ClassLabel;
use ndarray::Array2;

fn sine_recording(freq: f64, fs: f64, seconds: f64, amp: f64, channels: usize) -> ContinuousRecording {
    let n = (fs * seconds) as usize;
    let mut data = Array2::zeros((channels, n));
    for ch in 0..channels {
        for t in 0..n {
            data[[ch, t]] = amp * (2.0 * std::f64::consts::PI * freq * t as f64 / fs).sin();
        }
    }
    ContinuousRecording::new(data, fs, vec![], ChannelLayout::generic(channels)).unwrap()
}

/// Peak amplitude of the middle half of a channel (transients trimmed).
fn mid_amplitude(rec: &ContinuousRecording, ch: usize) -> f64 {
    let n = rec.n_samples();
    rec.data
        .row(ch)
        .iter()
        .skip(n / 4)
        .take(n / 2)
        .fold(0.0f64, |m, &v| m.max(v.abs()))
}

#[test]
fn passband_sine_amplitude_preserved() {
    // 10 Hz sits mid-band; the analytic oracle says gain ≈ 1 there.
    let cfg = PreprocessConfig::default();
    let oracle = butterworth_bandpass_gain(4, 1.0, 40.0, 1000.0, 10.0);
    assert!((oracle - 1.0).abs() < 1e-3, "oracle gain {oracle}");

    let rec = sine_recording(10.0, 1000.0, 10.0, 1.0, 1);
    let out = bandpass_filter(&rec, &cfg).unwrap();
    let amp = mid_amplitude(&out, 0);
    assert!(
        (amp - 1.0).abs() < 0.01,
        "10 Hz amplitude {amp} deviates more than 1%"
    );
}

#[test]
fn dc_offset_removed() {
    let cfg = PreprocessConfig::default();
    let n = 10_000;
    let data = Array2::from_elem((1, n), 50.0);
    let rec = ContinuousRecording::new(data, 1000.0, vec![], ChannelLayout::generic(1)).unwrap();
    let out = bandpass_filter(&rec, &cfg).unwrap();
    let worst = out
        .data
        .row(0)
        .iter()
        .skip(n / 4)
        .take(n / 2)
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    assert!(worst < 0.5, "DC residue {worst} µV after transients");
}

#[test]
fn lower_cutoff_gain_single_and_double_pass() {
    let fs = 1000.0;
    // Analytic oracle: −3 dB at the configured edge by construction.
    let oracle = butterworth_bandpass_gain(4, 1.0, 40.0, fs, 1.0);
    assert!((oracle - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);

    let sos = BandpassSos::design(4, 1.0, 40.0, fs).unwrap();
    // Designed magnitude matches the analytic response at the edge.
    assert!((sos.magnitude(1.0, fs) - oracle).abs() < 1e-6);

    // Measured single-pass gain on a long 1 Hz sine.
    let n = 60_000usize;
    let x: Vec<f64> = (0..n)
        .map(|t| (2.0 * std::f64::consts::PI * 1.0 * t as f64 / fs).sin())
        .collect();
    let y = sosfilt_forward(&sos, &x);
    let amp = y
        .iter()
        .skip(n / 2)
        .take(n / 4)
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let expect = std::f64::consts::FRAC_1_SQRT_2;
    assert!(
        (amp - expect).abs() / expect < 0.02,
        "single-pass edge gain {amp}, expected {expect}"
    );

    // Forward-backward squares the magnitude: 1/2.
    let y2 = filtfilt(&sos, &x);
    let amp2 = y2
        .iter()
        .skip(n / 2)
        .take(n / 4)
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    assert!(
        (amp2 - 0.5).abs() / 0.5 < 0.02,
        "zero-phase edge gain {amp2}, expected 0.5"
    );
}

#[test]
fn zero_phase_has_no_lag() {
    // Cross-correlate a filtered impulse train with the input; the peak must
    // sit at lag 0.
    let fs = 1000.0;
    let n = 8000usize;
    let mut x = vec![0.0f64; n];
    for k in (500..n - 500).step_by(500) {
        x[k] = 1.0;
    }
    let sos = BandpassSos::design(4, 1.0, 40.0, fs).unwrap();
    let y = filtfilt(&sos, &x);

    let max_lag = 50i64;
    let mut best = (0i64, f64::NEG_INFINITY);
    for lag in -max_lag..=max_lag {
        let mut acc = 0.0;
        for i in 0..n as i64 {
            let j = i + lag;
            if j >= 0 && (j as usize) < n {
                acc += x[i as usize] * y[j as usize];
            }
        }
        if acc > best.1 {
            best = (lag, acc);
        }
    }
    assert_eq!(best.0, 0, "cross-correlation peaks at lag {}", best.0);
}

#[test]
fn filtering_is_deterministic() {
    let cfg = PreprocessConfig::default();
    let rec = sine_recording(7.0, 1000.0, 4.0, 3.0, 3);
    let a = bandpass_filter(&rec, &cfg).unwrap();
    let b = bandpass_filter(&rec, &cfg).unwrap();
    assert_eq!(a.data, b.data);
}

#[test]
fn rejects_nonfinite_input() {
    let cfg = PreprocessConfig::default();
    let mut data = Array2::zeros((1, 100));
    data[[0, 50]] = f64::NAN;
    let rec = ContinuousRecording::new(data, 1000.0, vec![], ChannelLayout::generic(1)).unwrap();
    assert!(matches!(
        bandpass_filter(&rec, &cfg),
        Err(CoreError::NonFinite(_))
    ));
}

#[test]
fn rejects_infeasible_passband() {
    let cfg = PreprocessConfig {
        band_hi: 80.0,
        ..Default::default()
    };
    let rec = sine_recording(10.0, 120.0, 2.0, 1.0, 1);
    assert!(bandpass_filter(&rec, &cfg).is_err());
}

#[test]
fn downsample_preserves_sine_amplitude() {
    // Oracle: an analytically sampled 10 Hz unit sine at 128 Hz.
    let rec = sine_recording(10.0, 1000.0, 10.0, 1.0, 1);
    let out = downsample(&rec, 128.0).unwrap();
    assert_eq!(out.n_samples(), 1280);
    assert!((out.fs - 128.0).abs() < 1e-12);
    let amp = mid_amplitude(&out, 0);
    assert!(
        (amp - 1.0).abs() < 0.01,
        "downsampled amplitude {amp} deviates more than 1%"
    );
    // Pointwise against the analytic sine, mid-section.
    for t in 320..960 {
        let expect = (2.0 * std::f64::consts::PI * 10.0 * t as f64 / 128.0).sin();
        assert!(
            (out.data[[0, t]] - expect).abs() < 0.01,
            "sample {t}: {} vs {expect}",
            out.data[[0, t]]
        );
    }
}

#[test]
fn downsample_remaps_events() {
    let mut rec = sine_recording(10.0, 1000.0, 10.0, 1.0, 1);
    rec.events = vec![Event {
        onset_sample: 1000,
        class: ClassLabel::Target,
    }];
    let out = downsample(&rec, 128.0).unwrap();
    assert_eq!(out.events.len(), 1);
    assert_eq!(out.events[0].onset_sample, 128);
}

#[test]
fn downsample_keeps_constant() {
    let data = Array2::from_elem((2, 1000), 12.5);
    let rec = ContinuousRecording::new(data, 1000.0, vec![], ChannelLayout::generic(2)).unwrap();
    let out = downsample(&rec, 128.0).unwrap();
    for &v in out.data.iter() {
        assert!((v - 12.5).abs() < 1e-9, "constant drifted to {v}");
    }
}

#[test]
fn downsample_requires_lower_rate() {
    let rec = sine_recording(10.0, 128.0, 2.0, 1.0, 1);
    assert!(downsample(&rec, 128.0).is_err());
    assert!(downsample(&rec, 256.0).is_err());
}

#[test]
fn epoch_slices_per_event() {
    let fs = 128.0;
    let n = 1280;
    let mut data = Array2::zeros((19, n));
    for t in 0..n {
        data[[0, t]] = t as f64;
    }
    let events = vec![
        Event {
            onset_sample: 0,
            class: ClassLabel::Target,
        },
        Event {
            onset_sample: 256,
            class: ClassLabel::NonTarget,
        },
    ];
    let rec = ContinuousRecording::new(data, fs, events, ChannelLayout::standard_19()).unwrap();
    let cfg = PreprocessConfig::default();
    let (set, report) = epoch(&rec, &cfg, 3, 1).unwrap();
    assert_eq!(set.n_epochs(), 2);
    assert_eq!(report, SkipReport { kept: 2, skipped: 0 });
    assert_eq!(set.epochs()[0].data.dim(), (19, 128));
    assert_eq!(set.epochs()[0].data[[0, 5]], 5.0);
    assert_eq!(set.epochs()[1].data[[0, 0]], 256.0);
    assert_eq!(
        set.epochs()[0].condition,
        ConditionKey::real(3, 1, ClassLabel::Target)
    );
}

#[test]
fn epoch_skips_boundary_event() {
    // 1216 + 128 = 1344 > 1280 → skipped.
    let fs = 128.0;
    let data = Array2::zeros((19, 1280));
    let events = vec![Event {
        onset_sample: 1216,
        class: ClassLabel::Target,
    }];
    let rec = ContinuousRecording::new(data, fs, events, ChannelLayout::standard_19()).unwrap();
    let (set, report) = epoch(&rec, &PreprocessConfig::default(), 1, 1).unwrap();
    assert_eq!(set.n_epochs(), 0);
    assert_eq!(report, SkipReport { kept: 0, skipped: 1 });
}

#[test]
fn epoch_empty_events() {
    let rec = sine_recording(10.0, 128.0, 2.0, 1.0, 19);
    let (set, report) = epoch(&rec, &PreprocessConfig::default(), 1, 1).unwrap();
    assert!(set.is_empty());
    assert_eq!(report, SkipReport::default());
}

fn tiny_epoch(vals: &[f32], cond: ConditionKey) -> Epoch {
    Epoch {
        data: Array2::from_shape_vec((1, vals.len()), vals.to_vec()).unwrap(),
        condition: cond,
    }
}

#[test]
fn reject_drops_over_threshold() {
    let cond = ConditionKey::real(1, 1, ClassLabel::Target);
    let set = EpochSet::new(
        vec![
            tiny_epoch(&[-80.0, 80.0], cond), // ptp 160 → dropped
            tiny_epoch(&[5.0, 5.0], cond),    // constant → kept
        ],
        128.0,
        ChannelLayout::generic(1),
        2,
    )
    .unwrap();
    let (kept, stats) = reject_ptp(&set, 150.0).unwrap();
    assert_eq!(stats, RejectionStats { kept: 1, dropped: 1 });
    assert_eq!(kept.n_epochs(), 1);
    assert_eq!(kept.epochs()[0].data[[0, 0]], 5.0);
}

#[test]
fn reject_reproduces_reference_fraction() {
    // 438840 epochs with 63672 over threshold → 14.51% dropped.
    let cond = ConditionKey::real(1, 1, ClassLabel::NonTarget);
    let total = 438_840usize;
    let over = 63_672usize;
    let mut set = EpochSet::empty(128.0, ChannelLayout::generic(1), 2);
    for i in 0..total {
        let e = if i < over {
            tiny_epoch(&[-80.0, 80.0], cond)
        } else {
            tiny_epoch(&[0.0, 10.0], cond)
        };
        set.push(e).unwrap();
    }
    let (kept, stats) = reject_ptp(&set, 150.0).unwrap();
    assert_eq!(stats.dropped, over);
    assert_eq!(stats.kept, total - over);
    assert_eq!(kept.n_epochs(), total - over);
    assert!((stats.fraction_dropped() - 0.1451).abs() < 5e-5);
}

#[test]
fn reject_is_idempotent_and_preserves_survivors() {
    let cond = ConditionKey::real(1, 2, ClassLabel::Target);
    let set = EpochSet::new(
        vec![
            tiny_epoch(&[-80.0, 80.0], cond),
            tiny_epoch(&[1.25, -3.5], cond),
            tiny_epoch(&[100.0, -100.0], cond),
        ],
        128.0,
        ChannelLayout::generic(1),
        2,
    )
    .unwrap();
    let (once, s1) = reject_ptp(&set, 150.0).unwrap();
    let (twice, s2) = reject_ptp(&once, 150.0).unwrap();
    assert_eq!(once, twice);
    assert_eq!(s1.kept, 1);
    assert_eq!(s2, RejectionStats { kept: 1, dropped: 0 });
    // Survivor bytes untouched.
    assert_eq!(once.epochs()[0].data, set.epochs()[1].data);
}

#[test]
fn full_chain_is_deterministic() {
    let fs = 1000.0;
    let mut rec = sine_recording(10.0, fs, 4.0, 20.0, 19);
    rec.events = vec![
        Event {
            onset_sample: 500,
            class: ClassLabel::Target,
        },
        Event {
            onset_sample: 2000,
            class: ClassLabel::NonTarget,
        },
    ];
    let cfg = PreprocessConfig::default();
    let (a, sk_a, st_a) = preprocess_recording(&rec, &cfg, 5, 2).unwrap();
    let (b, sk_b, st_b) = preprocess_recording(&rec, &cfg, 5, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(sk_a, sk_b);
    assert_eq!(st_a, st_b);
    assert_eq!(a.epoch_len(), 128);
    assert_eq!(a.n_epochs(), 2);
}

#[test]
fn layout_rejects_duplicates() {
    assert!(ChannelLayout::new(vec!["a".into(), "a".into()]).is_err());
    assert_eq!(ChannelLayout::standard_19().count(), 19);
    assert_eq!(ChannelLayout::standard_19().index_of("O1"), Some(17));
}
