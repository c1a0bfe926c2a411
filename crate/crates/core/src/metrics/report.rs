use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Metric name to value, e.g. `{"f1": 0.94, "precision": 0.95}`.
pub type MetricSet = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pipeline: String,
    pub metric: String,
    pub value: f64,
    pub baseline: Option<f64>,
}

/// A side-by-side comparison of our metrics against optional reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

const MISSING: &str = "—";

/// Two to four decimals, trailing zeros beyond the second trimmed.
pub fn format_value(v: f64) -> String {
    let mut s = format!("{v:.4}");
    while s.ends_with('0') && s.len() - s.find('.').map_or(s.len(), |i| i + 1) > 2 {
        s.pop();
    }
    s
}

/// Builds one row per (pipeline, metric), ordered by pipeline then metric.
/// A baseline value is attached when the baseline has the same pipeline
/// and metric.
pub fn emit_report(
    results: &BTreeMap<String, MetricSet>,
    baseline: Option<&BTreeMap<String, MetricSet>>,
) -> Report {
    let mut rows = Vec::new();
    for (pipeline, metrics) in results {
        for (metric, value) in metrics {
            rows.push(ReportRow {
                pipeline: pipeline.clone(),
                metric: metric.clone(),
                value: *value,
                baseline: baseline
                    .and_then(|b| b.get(pipeline))
                    .and_then(|m| m.get(metric))
                    .copied(),
            });
        }
    }
    Report { rows }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let header = ["pipeline", "metric", "ours", "baseline"];
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.pipeline.clone(),
                    r.metric.clone(),
                    format_value(r.value),
                    r.baseline
                        .map(format_value)
                        .unwrap_or_else(|| MISSING.to_string()),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: [&str; 4]| {
            let mut out = String::new();
            for (i, (cell, w)) in row.iter().zip(widths).enumerate() {
                let pad = w - cell.chars().count();
                if i < 2 {
                    let _ = write!(out, "{cell}{}", " ".repeat(pad));
                } else {
                    let _ = write!(out, "{}{cell}", " ".repeat(pad));
                }
                if i < 3 {
                    out.push_str("  ");
                }
            }
            out.trim_end().to_string()
        };
        let mut out = line(header);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 6));
        out.push('\n');
        for row in &cells {
            out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
            out.push('\n');
        }
        out
    }
}
