//! `preprocess`: recordings container → epochs container.

use std::path::Path;

use anyhow::{bail, Context, Result};

use erpdiff_core::data::save_epochs;
use erpdiff_core::signal::{preprocess_recording, EpochSet};

use crate::config::RunConfig;
use crate::recordings::load_recordings;

#[allow(clippy::too_many_arguments)]
pub fn run(
    config: Option<&Path>,
    in_dir: &Path,
    out: &Path,
    band: Option<String>,
    order: Option<usize>,
    fs_out: Option<f64>,
    epoch_len: Option<f64>,
    ptp_reject: Option<f64>,
) -> Result<()> {
    let mut cfg = RunConfig::load(config)?.preprocess;
    if let Some(band) = band {
        let (lo, hi) = band
            .split_once(',')
            .with_context(|| format!("--band {band:?}: expected LO,HI"))?;
        cfg.band_lo = lo.trim().parse().with_context(|| format!("--band low {lo:?}"))?;
        cfg.band_hi = hi.trim().parse().with_context(|| format!("--band high {hi:?}"))?;
    }
    if let Some(order) = order {
        cfg.filter_order = order;
    }
    if let Some(fs) = fs_out {
        cfg.fs_out = fs;
    }
    if let Some(secs) = epoch_len {
        cfg.epoch_seconds = secs;
    }
    if let Some(uv) = ptp_reject {
        cfg.ptp_threshold = uv;
    }

    let recordings = load_recordings(in_dir)
        .with_context(|| format!("loading recordings container {}", in_dir.display()))?;
    if recordings.is_empty() {
        bail!("recordings container {} lists no recordings", in_dir.display());
    }

    let mut merged: Option<EpochSet> = None;
    let mut total_skipped = 0usize;
    let mut total_kept = 0usize;
    let mut total_dropped = 0usize;
    for r in &recordings {
        let (set, skips, stats) = preprocess_recording(&r.recording, &cfg, r.subject, r.session)
            .with_context(|| format!("preprocessing s{:02}/sess{}", r.subject, r.session))?;
        total_skipped += skips.skipped;
        total_kept += stats.kept;
        total_dropped += stats.dropped;
        match &mut merged {
            None => merged = Some(set),
            Some(m) => {
                for e in set.epochs() {
                    m.push(e.clone())?;
                }
            }
        }
    }
    let merged = merged.expect("at least one recording");
    save_epochs(&merged, out)
        .with_context(|| format!("writing epochs container {}", out.display()))?;
    let total = total_kept + total_dropped;
    let pct = if total > 0 {
        100.0 * total_dropped as f64 / total as f64
    } else {
        0.0
    };
    println!(
        "preprocessed {} recordings → {} epochs ({} skipped at boundaries, {}/{} = {:.2}% rejected) → {}",
        recordings.len(),
        merged.n_epochs(),
        total_skipped,
        total_dropped,
        total,
        pct,
        out.display()
    );
    Ok(())
}
