//! `eval`: real + generated containers → metric report CSV plus the
//! evoked/covariance companion CSVs that `report` plots from.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use erpdiff_core::data::{load_epochs, ClassLabel};
use erpdiff_core::metrics::{evaluate_sets, FeatureExtractor, MetricKind};
use erpdiff_core::signal::EpochSet;

use crate::config::RunConfig;

pub fn run(
    config: Option<&Path>,
    real_dir: &Path,
    gen_dir: &Path,
    metrics: &str,
    fx: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let metric_kinds = MetricKind::parse_list(metrics)?;
    let real = load_epochs(real_dir)
        .with_context(|| format!("loading real container {}", real_dir.display()))?;
    let gen = load_epochs(gen_dir)
        .with_context(|| format!("loading generated container {}", gen_dir.display()))?;
    let extractor = fx
        .map(|p| {
            FeatureExtractor::load(p)
                .with_context(|| format!("loading feature extractor {}", p.display()))
        })
        .transpose()?;

    let report = evaluate_sets(
        &real,
        &gen,
        &metric_kinds,
        &cfg.metrics.to_eval_options(),
        extractor.as_ref(),
    )?;
    report.write_csv(out)?;

    // Companion CSVs: per-class evoked mean ± sd and channel covariance of
    // the averaged responses, for both sides.
    let stem = out.with_extension("");
    let stem = stem.to_string_lossy();
    let evoked_path = format!("{stem}_evoked.csv");
    let cov_path = format!("{stem}_covariance.csv");
    std::fs::write(&evoked_path, evoked_csv(&real, &gen)?)
        .with_context(|| format!("writing {evoked_path}"))?;
    std::fs::write(&cov_path, covariance_csv(&real, &gen)?)
        .with_context(|| format!("writing {cov_path}"))?;

    println!(
        "evaluated {:?} over {} conditions → {} (+ {evoked_path}, {cov_path})",
        metric_kinds.iter().collect::<Vec<_>>(),
        real.conditions().len(),
        out.display()
    );
    Ok(())
}

pub const EVOKED_HEADER: &str = "kind,class,channel,sample,mean,sd";
pub const COVARIANCE_HEADER: &str = "kind,class,row,col,value";

fn evoked_csv(real: &EpochSet, gen: &EpochSet) -> Result<String> {
    let mut out = String::from(EVOKED_HEADER);
    out.push('\n');
    for (kind, set) in [("real", real), ("gen", gen)] {
        for class in ClassLabel::ALL {
            let sub = set.subset(&set.indices_where(|c| c.class() == Some(class)));
            if sub.is_empty() {
                continue;
            }
            let n = sub.n_epochs() as f64;
            for ch in 0..sub.n_channels() {
                for t in 0..sub.epoch_len() {
                    let mut sum = 0.0f64;
                    let mut sumsq = 0.0f64;
                    for e in sub.epochs() {
                        let v = e.data[[ch, t]] as f64;
                        sum += v;
                        sumsq += v * v;
                    }
                    let mean = sum / n;
                    let sd = (sumsq / n - mean * mean).max(0.0).sqrt();
                    let _ = writeln!(out, "{kind},{class},{ch},{t},{mean},{sd}");
                }
            }
        }
    }
    Ok(out)
}

fn covariance_csv(real: &EpochSet, gen: &EpochSet) -> Result<String> {
    let mut out = String::from(COVARIANCE_HEADER);
    out.push('\n');
    for (kind, set) in [("real", real), ("gen", gen)] {
        for class in ClassLabel::ALL {
            let sub = set.subset(&set.indices_where(|c| c.class() == Some(class)));
            if sub.is_empty() {
                continue;
            }
            let ev = erpdiff_core::metrics::evoked_of(&sub)?;
            let c = ev.data.nrows();
            let t = ev.data.ncols() as f64;
            let row_means: Vec<f64> = (0..c).map(|r| ev.data.row(r).sum() / t).collect();
            for r in 0..c {
                for col in 0..c {
                    let mut acc = 0.0;
                    for k in 0..ev.data.ncols() {
                        acc += (ev.data[[r, k]] - row_means[r]) * (ev.data[[col, k]] - row_means[col]);
                    }
                    let _ = writeln!(out, "{kind},{class},{r},{col},{}", acc / t);
                }
            }
        }
    }
    Ok(out)
}
