use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::MetricsReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Invalid(format!("unknown report format {other:?} (expected csv or json)"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

const SUMMARY_HEADER: &str = "metric,value";

#[derive(Serialize, Deserialize)]
struct JsonMetrics {
    rmse: f64,
    mae: f64,
    r2: f64,
    score: f64,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    metrics: JsonMetrics,
    pairs: Vec<[f64; 2]>,
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    if report.n == 0 || report.pairs.is_empty() {
        return Err(Error::Empty("report"));
    }
    Ok(match format {
        ReportFormat::Csv => {
            let mut s = String::from("true,predicted\n");
            for (t, p) in &report.pairs {
                s.push_str(&format!("{},{}\n", num(*t), num(*p)));
            }
            s.push('\n');
            s.push_str(SUMMARY_HEADER);
            s.push('\n');
            for (k, v) in [
                ("rmse", report.rmse),
                ("mae", report.mae),
                ("r2", report.r2),
                ("score", report.score),
            ] {
                s.push_str(&format!("{k},{}\n", num(v)));
            }
            s.push_str(&format!("n,{}\n", report.n));
            s
        }
        ReportFormat::Json => {
            let doc = JsonReport {
                metrics: JsonMetrics {
                    rmse: report.rmse,
                    mae: report.mae,
                    r2: report.r2,
                    score: report.score,
                    n: report.n,
                },
                pairs: report.pairs.iter().map(|&(t, p)| [t, p]).collect(),
            };
            serde_json::to_string_pretty(&doc)? + "\n"
        }
    })
}

/// Write `report` to `path` in `format`.
pub fn emit_report(report: &MetricsReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = render_report(report, format)?;
    crate::persist::write_atomic(path, text.as_bytes())
}

/// Parse a report written by [`emit_report`]. Metrics are recomputed from
/// the pairs.
pub fn parse_report(text: &str, format: ReportFormat) -> Result<MetricsReport> {
    let pairs: Vec<(f64, f64)> = match format {
        ReportFormat::Json => {
            let doc: JsonReport = serde_json::from_str(text)?;
            doc.pairs.into_iter().map(|[t, p]| (t, p)).collect()
        }
        ReportFormat::Csv => {
            let mut lines = text.lines();
            if lines.next() != Some("true,predicted") {
                return Err(Error::Invalid("report is missing the true,predicted header".into()));
            }
            let mut pairs = Vec::new();
            for line in lines {
                if line.is_empty() || line == SUMMARY_HEADER {
                    break;
                }
                let (t, p) = line
                    .split_once(',')
                    .ok_or_else(|| Error::Invalid(format!("bad report row {line:?}")))?;
                let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Invalid(format!("bad number {s:?}")));
                pairs.push((parse(t)?, parse(p)?));
            }
            pairs
        }
    };
    MetricsReport::from_pairs(&pairs)
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsReport {
        MetricsReport::new(&[0.1, 2.0 / 3.0, 125.0], &[1e-17, std::f64::consts::PI, 99.99]).unwrap()
    }

    #[test]
    fn both_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for fmt in [ReportFormat::Csv, ReportFormat::Json] {
            let p = dir.path().join(format!("r.{fmt}"));
            emit_report(&sample(), &p, fmt).unwrap();
            assert_eq!(read_report(&p, fmt).unwrap(), sample());
        }
    }

    #[test]
    fn csv_layout() {
        let text = render_report(&sample(), ReportFormat::Csv).unwrap();
        assert!(text.starts_with("true,predicted\n1.0000000000000001e-1,"));
        assert!(text.contains("\n\nmetric,value\nrmse,"));
        assert!(text.ends_with("n,3\n"));
    }

    #[test]
    fn rejects_unknown_format_and_empty_report() {
        assert!("xml".parse::<ReportFormat>().is_err());
        let mut empty = sample();
        empty.pairs.clear();
        empty.n = 0;
        assert!(render_report(&empty, ReportFormat::Json).is_err());
    }
}
