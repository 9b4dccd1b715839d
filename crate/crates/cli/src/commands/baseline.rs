//! `baseline`: real container → reference values CSV (within-session ABA,
//! between-session SWD/PAD/PLD/SD-MD, FID reference protocols).

use std::path::Path;

use anyhow::{Context, Result};

use erpdiff_core::data::{load_epochs, ClassLabel};
use erpdiff_core::metrics::{
    aba, between_session_baseline, fid_between_sessions, fid_random_half, fid_subject_split,
    select_p300_channel, AbaConfig, ClassScope, FeatureExtractor, MetricReport, MetricRow,
    PairMetric,
};

use crate::config::RunConfig;

pub fn run(config: Option<&Path>, real_dir: &Path, fx: Option<&str>, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let real = load_epochs(real_dir)
        .with_context(|| format!("loading real container {}", real_dir.display()))?;
    let mut report = MetricReport::default();

    // Within-session ABA baseline (no generated arm).
    let aba_out = aba(
        &real,
        None,
        &AbaConfig {
            folds: cfg.metrics.folds,
            gamma: cfg.metrics.lda_gamma,
            seed: cfg.metrics.seed,
        },
    )?;
    for u in &aba_out.units {
        report.push(MetricRow {
            subject: Some(u.subject),
            session: Some(u.session),
            scope: ClassScope::Both,
            metric: "aba_within_session".into(),
            value: u.baseline,
            baseline: None,
        });
    }
    report.push(MetricRow {
        subject: None,
        session: None,
        scope: ClassScope::Both,
        metric: "aba_within_session".into(),
        value: aba_out.baseline_mean().expect("≥1 unit"),
        baseline: None,
    });
    for w in &aba_out.skipped {
        eprintln!("warning: {w}");
    }

    // Between-session variability for the pairwise metrics.
    if real.sessions().len() >= 2 {
        let target_all =
            real.subset(&real.indices_where(|c| c.class() == Some(ClassLabel::Target)));
        let channel = select_p300_channel(&target_all, cfg.metrics.peak_window)?;
        let window = cfg.metrics.peak_window;
        let metrics: Vec<(String, PairMetric, f64)> = vec![
            (
                "swd_between_session".into(),
                PairMetric::Swd {
                    n_projections: cfg.metrics.n_projections,
                    seed: cfg.metrics.seed,
                },
                1.0,
            ),
            ("pad_between_session".into(), PairMetric::Pad { channel, window }, 1.0),
            ("pld_s_between_session".into(), PairMetric::Pld { channel, window }, 1.0),
            (
                "pld_ms_between_session".into(),
                PairMetric::Pld { channel, window },
                1000.0,
            ),
            ("sdmd_between_session".into(), PairMetric::SdMd, 1.0),
        ];
        for (name, metric, scale) in metrics {
            let res = between_session_baseline(&real, metric)?;
            for e in &res.entries {
                report.push(MetricRow {
                    subject: Some(e.subject),
                    session: None,
                    scope: e.class.into(),
                    metric: name.clone(),
                    value: e.value * scale,
                    baseline: None,
                });
            }
            for scope in [ClassScope::Target, ClassScope::NonTarget] {
                let class = match scope {
                    ClassScope::Target => ClassLabel::Target,
                    _ => ClassLabel::NonTarget,
                };
                if let Some(m) = res.mean_of(class) {
                    report.push(MetricRow {
                        subject: None,
                        session: None,
                        scope,
                        metric: name.clone(),
                        value: m * scale,
                        baseline: None,
                    });
                }
            }
            report.push(MetricRow {
                subject: None,
                session: None,
                scope: ClassScope::Both,
                metric: name.clone(),
                value: res.mean().expect("≥1 entry") * scale,
                baseline: None,
            });
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
        }
    } else {
        eprintln!(
            "warning: {} has a single session; between-session baselines skipped",
            real_dir.display()
        );
    }

    // FID reference protocols (need a trained extractor).
    if let Some(fx_path) = fx {
        let extractor = FeatureExtractor::load(Path::new(fx_path))
            .with_context(|| format!("loading feature extractor {fx_path}"))?;
        report.push(MetricRow {
            subject: None,
            session: None,
            scope: ClassScope::Both,
            metric: "fid_random_half".into(),
            value: fid_random_half(
                &real,
                &extractor,
                cfg.metrics.fid_random_half_repeats,
                cfg.metrics.seed,
            )?,
            baseline: None,
        });
        if real.sessions().len() >= 2 {
            report.push(MetricRow {
                subject: None,
                session: None,
                scope: ClassScope::Both,
                metric: "fid_between_sessions".into(),
                value: fid_between_sessions(&real, &extractor)?,
                baseline: None,
            });
        }
        if real.subjects().len() >= 2 {
            report.push(MetricRow {
                subject: None,
                session: None,
                scope: ClassScope::Both,
                metric: "fid_subject_split".into(),
                value: fid_subject_split(&real, &extractor)?,
                baseline: None,
            });
        }
    }

    report.write_csv(out)?;
    println!("baseline references ({} rows) → {}", report.rows.len(), out.display());
    Ok(())
}
