//! Metric report rows and their CSV serialization.

use std::fmt;
use std::path::Path;

use crate::data::ClassLabel;
use crate::error::CoreError;
use crate::Result;

/// Which class(es) a row covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassScope {
    Target,
    NonTarget,
    Both,
}

impl ClassScope {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassScope::Target => "target",
            ClassScope::NonTarget => "nontarget",
            ClassScope::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(ClassScope::Target),
            "nontarget" => Ok(ClassScope::NonTarget),
            "both" => Ok(ClassScope::Both),
            other => Err(CoreError::Format(format!("unknown class scope {other:?}"))),
        }
    }
}

impl From<ClassLabel> for ClassScope {
    fn from(c: ClassLabel) -> Self {
        match c {
            ClassLabel::Target => ClassScope::Target,
            ClassLabel::NonTarget => ClassScope::NonTarget,
        }
    }
}

impl fmt::Display for ClassScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One metric measurement; `subject`/`session` of `None` mark aggregates
/// (rendered as `ALL`).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub subject: Option<u32>,
    pub session: Option<u32>,
    pub scope: ClassScope,
    pub metric: String,
    pub value: f64,
    pub baseline: Option<f64>,
}

/// Per-condition values and aggregates for the whole metric suite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

pub const REPORT_HEADER: &str = "subject,session,class_scope,metric,value,baseline_value";

impl MetricReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: MetricReport) {
        self.rows.extend(other.rows);
    }

    /// Aggregate row of one metric (subject = session = ALL).
    pub fn aggregate(&self, metric: &str, scope: ClassScope) -> Option<&MetricRow> {
        self.rows.iter().find(|r| {
            r.subject.is_none() && r.session.is_none() && r.metric == metric && r.scope == scope
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let subject = r
                .subject
                .map(|s| s.to_string())
                .unwrap_or_else(|| "ALL".into());
            let session = r
                .session
                .map(|s| s.to_string())
                .unwrap_or_else(|| "ALL".into());
            let baseline = r.baseline.map(|b| b.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{subject},{session},{},{},{},{baseline}\n",
                r.scope, r.metric, r.value
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == REPORT_HEADER => {}
            other => {
                return Err(CoreError::Format(format!(
                    "metric CSV header {:?} malformed",
                    other.unwrap_or("")
                )))
            }
        }
        let mut rows = Vec::new();
        for (no, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(CoreError::Format(format!(
                    "metric CSV row {} has {} fields, expected 6",
                    no + 1,
                    parts.len()
                )));
            }
            let parse_id = |s: &str| -> Result<Option<u32>> {
                if s == "ALL" {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| CoreError::Format(format!("bad id {s:?}")))
                }
            };
            let value: f64 = parts[4]
                .parse()
                .map_err(|_| CoreError::Format(format!("bad value {:?}", parts[4])))?;
            let baseline = if parts[5].is_empty() {
                None
            } else {
                Some(parts[5].parse().map_err(|_| {
                    CoreError::Format(format!("bad baseline value {:?}", parts[5]))
                })?)
            };
            rows.push(MetricRow {
                subject: parse_id(parts[0])?,
                session: parse_id(parts[1])?,
                scope: ClassScope::parse(parts[2])?,
                metric: parts[3].to_string(),
                value,
                baseline,
            });
        }
        Ok(MetricReport { rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        Self::from_csv_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let mut report = MetricReport::default();
        report.push(MetricRow {
            subject: Some(3),
            session: Some(1),
            scope: ClassScope::Target,
            metric: "swd".into(),
            value: 1.25,
            baseline: Some(1.5),
        });
        report.push(MetricRow {
            subject: None,
            session: None,
            scope: ClassScope::Both,
            metric: "fid".into(),
            value: 0.0093,
            baseline: None,
        });
        let text = report.to_csv();
        assert!(text.starts_with(REPORT_HEADER));
        assert!(text.contains("3,1,target,swd,1.25,1.5\n"));
        assert!(text.contains("ALL,ALL,both,fid,0.0093,\n"));
        let back = MetricReport::from_csv_str(&text).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(MetricReport::from_csv_str("bad header\n").is_err());
        let text = format!("{REPORT_HEADER}\n1,1,target,swd\n");
        assert!(MetricReport::from_csv_str(&text).is_err());
    }
}
