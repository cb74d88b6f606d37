use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::EvalReport;
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 10] = [
    "dataset",
    "method",
    "k",
    "seed",
    "accuracy",
    "base",
    "new",
    "h",
    "iter_seconds",
    "param_count",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::validation(format!("unknown report format {s:?}"))),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", 100.0 * v))
        .unwrap_or_else(|| "-".into())
}

pub fn emit_report(reports: &[EvalReport], format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_COLUMNS)?;
            for r in reports {
                w.write_record([
                    r.dataset.clone(),
                    r.method.clone(),
                    opt(r.k),
                    opt(r.seed),
                    r.accuracy.to_string(),
                    opt(r.base),
                    opt(r.new),
                    opt(r.h),
                    opt(r.iter_seconds),
                    opt(r.param_count),
                ])?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(reports)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| Dataset | Method | k | Accuracy | Base | New | H |\n");
            s.push_str("|---|---|---|---|---|---|---|\n");
            for r in reports {
                let k = r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    r.dataset,
                    r.method,
                    k,
                    pct(Some(r.accuracy)),
                    pct(r.base),
                    pct(r.new),
                    pct(r.h)
                );
            }
            Ok(s.into_bytes())
        }
    }
}

/// Parses the JSON produced by `emit_report`, or a single report object.
pub fn parse_reports_json(bytes: &[u8]) -> Result<Vec<EvalReport>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<EvalReport>),
        One(Box<EvalReport>),
    }
    Ok(match serde_json::from_slice(bytes)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(r) => vec![*r],
    })
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Averages reports that share dataset, method and k over their seeds.
/// Optional metrics are averaged only when every member has them.
/// Histograms are dropped and the seed is cleared.
pub fn mean_over_seeds(reports: &[EvalReport]) -> Vec<EvalReport> {
    let mut groups: BTreeMap<(String, String, Option<usize>), Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.dataset.clone(), r.method.clone(), r.k))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, method, k), rs)| {
            let n = rs.len() as f64;
            let mut out = EvalReport::new(
                &dataset,
                &method,
                rs.iter().map(|r| r.accuracy).sum::<f64>() / n,
            );
            out.k = k;
            out.base = mean_opt(rs.iter().map(|r| r.base));
            out.new = mean_opt(rs.iter().map(|r| r.new));
            out.h = mean_opt(rs.iter().map(|r| r.h));
            out.iter_seconds = mean_opt(rs.iter().map(|r| r.iter_seconds));
            out.param_count = rs[0]
                .param_count
                .filter(|&p| rs.iter().all(|r| r.param_count == Some(p)));
            out
        })
        .collect()
}
