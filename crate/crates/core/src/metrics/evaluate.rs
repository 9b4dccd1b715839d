//! Per-condition evaluation of a generated set against its real
//! counterpart, aggregated per the reporting convention: distance metrics
//! run within each (subject, session, class) condition and their unweighted
//! average across conditions is reported.

use crate::data::{ClassLabel, ConditionKey};
use crate::error::CoreError;
use crate::signal::EpochSet;
use crate::Result;

use super::aba::{aba, AbaConfig};
use super::evoked::{evoked_of, pad, pld, sd_md, select_p300_channel, PeakWindow};
use super::fid::fid;
use super::fx::FeatureExtractor;
use super::report::{ClassScope, MetricReport, MetricRow};
use super::swd::swd;

/// Metric selector; `parse_list` accepts `all` or a comma-separated list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Aba,
    Swd,
    Fid,
    Pad,
    Pld,
    SdMd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Aba,
        MetricKind::Swd,
        MetricKind::Fid,
        MetricKind::Pad,
        MetricKind::Pld,
        MetricKind::SdMd,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aba" => Ok(MetricKind::Aba),
            "swd" => Ok(MetricKind::Swd),
            "fid" => Ok(MetricKind::Fid),
            "pad" => Ok(MetricKind::Pad),
            "pld" => Ok(MetricKind::Pld),
            "sdmd" | "sd-md" => Ok(MetricKind::SdMd),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown metric {other:?} (expected aba|swd|fid|pad|pld|sdmd)"
            ))),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',').map(Self::parse).collect()
    }
}

/// Options shared by the evaluation and baseline commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub n_projections: usize,
    pub seed: u64,
    pub peak_window: PeakWindow,
    pub lda_gamma: Option<f64>,
    pub folds: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            n_projections: 128,
            seed: 0,
            peak_window: None,
            lda_gamma: None,
            folds: 5,
        }
    }
}

fn push_condition_aggregates(
    report: &mut MetricReport,
    metric: &str,
    per_condition: &[(ConditionKey, f64)],
) {
    for scope in [ClassScope::Target, ClassScope::NonTarget, ClassScope::Both] {
        let vals: Vec<f64> = per_condition
            .iter()
            .filter(|(c, _)| match scope {
                ClassScope::Both => true,
                ClassScope::Target => c.class() == Some(ClassLabel::Target),
                ClassScope::NonTarget => c.class() == Some(ClassLabel::NonTarget),
            })
            .map(|(_, v)| *v)
            .collect();
        if !vals.is_empty() {
            report.push(MetricRow {
                subject: None,
                session: None,
                scope,
                metric: metric.to_string(),
                value: vals.iter().sum::<f64>() / vals.len() as f64,
                baseline: None,
            });
        }
    }
}

/// Runs the requested metrics between `real` and `gen`. Every condition in
/// `real` must be present in `gen` (counts may differ). FID runs globally
/// over the pooled sets and needs a trained feature extractor.
pub fn evaluate_sets(
    real: &EpochSet,
    gen: &EpochSet,
    metrics: &[MetricKind],
    opts: &EvalOptions,
    fx: Option<&FeatureExtractor>,
) -> Result<MetricReport> {
    let conditions = real.conditions();
    for &cond in &conditions {
        if gen.count_condition(cond) == 0 {
            return Err(CoreError::Condition(format!(
                "generated set has no epochs for condition {cond}"
            )));
        }
    }
    let mut report = MetricReport::default();

    for &metric in metrics {
        match metric {
            MetricKind::Swd | MetricKind::SdMd => {
                let mut per_condition = Vec::new();
                for &cond in &conditions {
                    let a = real.of_condition(cond);
                    let b = gen.of_condition(cond);
                    let v = match metric {
                        MetricKind::Swd => swd(&a, &b, opts.n_projections, opts.seed)?,
                        _ => sd_md(&a, &b)?,
                    };
                    let name = if metric == MetricKind::Swd { "swd" } else { "sdmd" };
                    report.push(MetricRow {
                        subject: cond.subject(),
                        session: cond.session(),
                        scope: cond.class().map(Into::into).unwrap_or(ClassScope::Both),
                        metric: name.into(),
                        value: v,
                        baseline: None,
                    });
                    per_condition.push((cond, v));
                }
                let name = if metric == MetricKind::Swd { "swd" } else { "sdmd" };
                push_condition_aggregates(&mut report, name, &per_condition);
            }
            MetricKind::Pad | MetricKind::Pld => {
                let all_real_target =
                    real.subset(&real.indices_where(|c| c.class() == Some(ClassLabel::Target)));
                if all_real_target.is_empty() {
                    return Err(CoreError::Metric(
                        "peak metrics need target epochs in the real set".into(),
                    ));
                }
                let channel = select_p300_channel(&all_real_target, opts.peak_window)?;
                let mut rows = Vec::new();
                for subject in real.subjects() {
                    for session in real.sessions() {
                        let cond = ConditionKey::real(subject, session, ClassLabel::Target);
                        let a = real.of_condition(cond);
                        let b = gen.of_condition(cond);
                        if a.is_empty() || b.is_empty() {
                            continue;
                        }
                        let ev_a = evoked_of(&a)?;
                        let ev_b = evoked_of(&b)?;
                        match metric {
                            MetricKind::Pad => {
                                let v = pad(&ev_a, &ev_b, channel, opts.peak_window)?;
                                rows.push((subject, session, "pad".to_string(), v));
                            }
                            _ => {
                                let s = pld(&ev_a, &ev_b, channel, opts.peak_window)?;
                                rows.push((subject, session, "pld_s".to_string(), s));
                                rows.push((subject, session, "pld_ms".to_string(), s * 1000.0));
                            }
                        }
                    }
                }
                if rows.is_empty() {
                    return Err(CoreError::Metric(
                        "no subject/session pair had target epochs on both sides".into(),
                    ));
                }
                let names: Vec<String> = {
                    let mut n: Vec<String> = rows.iter().map(|r| r.2.clone()).collect();
                    n.dedup();
                    n.sort();
                    n.dedup();
                    n
                };
                for (subject, session, name, v) in &rows {
                    report.push(MetricRow {
                        subject: Some(*subject),
                        session: Some(*session),
                        scope: ClassScope::Target,
                        metric: name.clone(),
                        value: *v,
                        baseline: None,
                    });
                }
                for name in names {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.2 == name)
                        .map(|r| r.3)
                        .collect();
                    report.push(MetricRow {
                        subject: None,
                        session: None,
                        scope: ClassScope::Target,
                        metric: name,
                        value: vals.iter().sum::<f64>() / vals.len() as f64,
                        baseline: None,
                    });
                }
            }
            MetricKind::Aba => {
                let out = aba(
                    real,
                    Some(gen),
                    &AbaConfig {
                        folds: opts.folds,
                        gamma: opts.lda_gamma,
                        seed: opts.seed,
                    },
                )?;
                for u in &out.units {
                    report.push(MetricRow {
                        subject: Some(u.subject),
                        session: Some(u.session),
                        scope: ClassScope::Both,
                        metric: "aba".into(),
                        value: u.generated.expect("generated arm requested"),
                        baseline: Some(u.baseline),
                    });
                }
                report.push(MetricRow {
                    subject: None,
                    session: None,
                    scope: ClassScope::Both,
                    metric: "aba".into(),
                    value: out.generated_mean().expect("≥1 unit"),
                    baseline: out.baseline_mean(),
                });
            }
            MetricKind::Fid => {
                let fx = fx.ok_or_else(|| {
                    CoreError::InvalidConfig(
                        "fid requested but no feature extractor provided".into(),
                    )
                })?;
                report.push(MetricRow {
                    subject: None,
                    session: None,
                    scope: ClassScope::Both,
                    metric: "fid".into(),
                    value: fid(real, gen, fx)?,
                    baseline: None,
                });
            }
        }
    }
    Ok(report)
}
