//! `report`: metric / baseline / evoked / covariance CSVs → static SVGs.
//!
//! Input kinds are detected by header. Metric CSVs (one per evaluated
//! checkpoint, in order) feed the metric-vs-checkpoint curves; a baseline
//! CSV adds dashed reference lines; evoked and covariance CSVs produce the
//! overlay and heatmap figures.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use erpdiff_core::metrics::{ClassScope, MetricReport, REPORT_HEADER};

use crate::commands::eval::{COVARIANCE_HEADER, EVOKED_HEADER};
use crate::svg::{heatmap, Chart, PALETTE};

pub fn run(in_csv: &str, out: &Path, deterministic: bool) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut metric_files: Vec<(String, MetricReport)> = Vec::new();
    let mut baseline_file: Option<MetricReport> = None;
    let mut evoked_file: Option<String> = None;
    let mut covariance_file: Option<String> = None;

    for path in in_csv.split(',') {
        let path = path.trim();
        if path.is_empty() {
            continue;
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let header = text.lines().next().unwrap_or("");
        if header == REPORT_HEADER {
            let report = MetricReport::from_csv_str(&text)?;
            let is_baseline = report
                .rows
                .iter()
                .any(|r| r.metric.ends_with("_between_session") || r.metric == "aba_within_session");
            if is_baseline {
                baseline_file = Some(report);
            } else {
                let stem = Path::new(path)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.to_string());
                metric_files.push((stem, report));
            }
        } else if header == EVOKED_HEADER {
            evoked_file = Some(text);
        } else if header == COVARIANCE_HEADER {
            covariance_file = Some(text);
        } else {
            bail!("{path}: unrecognized CSV header {header:?}");
        }
    }

    let mut written = Vec::new();
    if !metric_files.is_empty() {
        let path = out.join("metrics_curves.svg");
        std::fs::write(&path, metric_curves_svg(&metric_files, baseline_file.as_ref(), deterministic))?;
        written.push(path);

        if let Some(svg) = pld_bars_svg(&metric_files, baseline_file.as_ref(), deterministic) {
            let path = out.join("pld_subjects.svg");
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    if let Some(text) = evoked_file {
        let path = out.join("evoked_overlay.svg");
        std::fs::write(&path, evoked_svg(&text, deterministic)?)?;
        written.push(path);
    }
    if let Some(text) = covariance_file {
        for (name, svg) in covariance_svgs(&text, deterministic)? {
            let path = out.join(name);
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    if written.is_empty() {
        bail!("no plottable inputs among {in_csv:?}");
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

/// One polyline per aggregate (metric, scope) series across the metric
/// files, with dashed baseline references where available.
fn metric_curves_svg(
    files: &[(String, MetricReport)],
    baseline: Option<&MetricReport>,
    deterministic: bool,
) -> String {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, (_, report)) in files.iter().enumerate() {
        for row in &report.rows {
            if row.subject.is_none() && row.session.is_none() {
                series
                    .entry(format!("{} ({})", row.metric, row.scope))
                    .or_default()
                    .push((i as f64, row.value));
            }
        }
    }
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for pts in series.values() {
        for &(_, y) in pts {
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    let mut baselines: Vec<(String, f64)> = Vec::new();
    if let Some(b) = baseline {
        for row in &b.rows {
            if row.subject.is_none() && row.session.is_none() && row.scope == ClassScope::Both {
                baselines.push((row.metric.clone(), row.value));
                y_lo = y_lo.min(row.value);
                y_hi = y_hi.max(row.value);
            }
        }
    }
    if !y_lo.is_finite() {
        y_lo = 0.0;
        y_hi = 1.0;
    }
    let mut chart = Chart::new(720.0, 420.0, (0.0, (files.len().max(2) - 1) as f64), (y_lo, y_hi));
    chart.title("metrics per evaluated checkpoint");
    let mut legend = Vec::new();
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart.polyline(pts, color);
        legend.push((name.clone(), color.to_string()));
    }
    for (i, (name, value)) in baselines.iter().enumerate() {
        chart.hline(*value, PALETTE[(series.len() + i) % PALETTE.len()], name);
    }
    for (i, (stem, _)) in files.iter().enumerate() {
        chart.label_x(i as f64, stem);
    }
    chart.legend(&legend);
    chart.into_svg(deterministic)
}

/// Bars of per-subject PLD (ms) from the last metric file, with the
/// between-session baseline as a dashed line when available.
fn pld_bars_svg(
    files: &[(String, MetricReport)],
    baseline: Option<&MetricReport>,
    deterministic: bool,
) -> Option<String> {
    let (_, last) = files.last()?;
    let rows: Vec<(u32, u32, f64)> = last
        .rows
        .iter()
        .filter(|r| r.metric == "pld_ms" && r.subject.is_some())
        .map(|r| (r.subject.unwrap(), r.session.unwrap_or(0), r.value))
        .collect();
    if rows.is_empty() {
        return None;
    }
    let y_hi = rows.iter().map(|r| r.2).fold(0.0f64, f64::max);
    let baseline_v = baseline.and_then(|b| {
        b.rows
            .iter()
            .find(|r| r.metric == "pld_ms_between_session" && r.subject.is_none())
            .map(|r| r.value)
    });
    let y_hi = y_hi.max(baseline_v.unwrap_or(0.0)).max(1e-9);
    let mut chart = Chart::new(640.0, 380.0, (-0.5, rows.len() as f64 - 0.5), (0.0, y_hi));
    chart.title("per-subject peak latency delta (ms)");
    for (i, (subject, session, v)) in rows.iter().enumerate() {
        chart.bar(i as f64, 0.8, *v, PALETTE[(*session as usize) % PALETTE.len()]);
        chart.label_x(i as f64, &format!("s{subject:02}/e{session}"));
    }
    if let Some(b) = baseline_v {
        chart.hline(b, "#555555", "between-session");
    }
    Some(chart.into_svg(deterministic))
}

/// Evoked overlays: real vs generated mean ± 1 SD per class for up to three
/// channels (those with the largest real target peaks).
fn evoked_svg(text: &str, deterministic: bool) -> Result<String> {
    // kind,class,channel,sample,mean,sd
    let mut data: BTreeMap<(String, String, usize), Vec<(usize, f64, f64)>> = BTreeMap::new();
    for (no, line) in text.lines().skip(1).enumerate() {
        if line.is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 6 {
            bail!("evoked CSV row {}: expected 6 fields", no + 1);
        }
        let ch: usize = p[2].parse().context("evoked channel")?;
        let t: usize = p[3].parse().context("evoked sample")?;
        let mean: f64 = p[4].parse().context("evoked mean")?;
        let sd: f64 = p[5].parse().context("evoked sd")?;
        data.entry((p[0].to_string(), p[1].to_string(), ch))
            .or_default()
            .push((t, mean, sd));
    }
    // Pick up to 3 channels by real-target peak.
    let mut channel_peaks: BTreeMap<usize, f64> = BTreeMap::new();
    for ((kind, class, ch), series) in &data {
        if kind == "real" && class == "target" {
            let peak = series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            channel_peaks.insert(*ch, peak);
        }
    }
    let mut chans: Vec<(usize, f64)> = channel_peaks.into_iter().collect();
    chans.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let chosen: Vec<usize> = chans.iter().take(3).map(|c| c.0).collect();

    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    let mut x_hi = 1.0f64;
    for ((_, _, ch), series) in &data {
        if !chosen.contains(ch) {
            continue;
        }
        for &(t, m, s) in series {
            y_lo = y_lo.min(m - s);
            y_hi = y_hi.max(m + s);
            x_hi = x_hi.max(t as f64);
        }
    }
    let mut chart = Chart::new(760.0, 440.0, (0.0, x_hi), (y_lo, y_hi));
    chart.title("evoked responses: real vs generated (±1 SD)");
    let mut legend = Vec::new();
    let mut color_idx = 0usize;
    for ((kind, class, ch), series) in &data {
        if !chosen.contains(ch) {
            continue;
        }
        let mut sorted = series.clone();
        sorted.sort_by_key(|s| s.0);
        let center: Vec<(f64, f64)> = sorted.iter().map(|&(t, m, _)| (t as f64, m)).collect();
        let sds: Vec<f64> = sorted.iter().map(|&(_, _, s)| s).collect();
        let color = PALETTE[color_idx % PALETTE.len()];
        color_idx += 1;
        chart.band(&center, &sds, color);
        chart.polyline(&center, color);
        legend.push((format!("{kind} {class} ch{ch}"), color.to_string()));
    }
    chart.legend(&legend);
    Ok(chart.into_svg(deterministic))
}

/// One heatmap per (kind, class) covariance matrix.
fn covariance_svgs(text: &str, deterministic: bool) -> Result<Vec<(String, String)>> {
    // kind,class,row,col,value
    let mut mats: BTreeMap<(String, String), Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (no, line) in text.lines().skip(1).enumerate() {
        if line.is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 5 {
            bail!("covariance CSV row {}: expected 5 fields", no + 1);
        }
        mats.entry((p[0].to_string(), p[1].to_string()))
            .or_default()
            .push((
                p[2].parse().context("covariance row")?,
                p[3].parse().context("covariance col")?,
                p[4].parse().context("covariance value")?,
            ));
    }
    let mut out = Vec::new();
    for ((kind, class), entries) in mats {
        let n = entries.iter().map(|e| e.0.max(e.1)).max().unwrap_or(0) + 1;
        let mut m = vec![vec![0.0; n]; n];
        for (r, c, v) in entries {
            m[r][c] = v;
        }
        let title = format!("channel covariance of averaged {class} response ({kind})");
        out.push((
            format!("covariance_{kind}_{class}.svg"),
            heatmap(&m, 18.0, &title, deterministic),
        ));
    }
    Ok(out)
}
