//! Side-by-side comparison of per-policy reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analyze::RunReport;

/// Headline end-to-end throughput gain the comparison is read against.
pub const HEADLINE_THROUGHPUT_GAIN: f64 = 3.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Higher,
    Info,
}

impl Direction {
    fn arrow(self) -> &'static str {
        match self {
            Direction::Lower => "lower",
            Direction::Higher => "higher",
            Direction::Info => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub table: u8,
    pub metric: String,
    pub direction: Direction,
    pub wall_clock: bool,
    /// Keyed by policy label.
    pub values: BTreeMap<String, f64>,
    /// `"A/B"` → value(A) / value(B) for each later policy A over earlier B.
    pub ratios: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub policies: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error("need at least two reports, got {0}")]
    TooFewReports(usize),
    #[error("metric {metric} missing for {policy}")]
    MissingMetric { policy: String, metric: String },
}

type Getter = fn(&RunReport) -> Option<f64>;

const TITLES: [&str; 5] =
    ["Latency and throughput", "Endpoint latency (ms)", "Retrieval footprint", "Prompt size", "Retrieval quality"];

fn metrics() -> Vec<(u8, &'static str, Direction, bool, Getter)> {
    use Direction::*;
    vec![
        (1, "success_rate_pct", Higher, false, |r| Some(r.success_rate_pct)),
        (1, "throughput_rps", Higher, true, |r| r.throughput_rps),
        (1, "latency_p50_ms", Lower, true, |r| r.latency.as_ref().map(|l| l.p50_ms)),
        (1, "latency_p95_ms", Lower, true, |r| r.latency.as_ref().map(|l| l.p95_ms)),
        (1, "latency_p99_ms", Lower, true, |r| r.latency.as_ref().map(|l| l.p99_ms)),
        (1, "pct_over_1s", Lower, true, |r| Some(r.pct_over_1s)),
        (1, "pct_over_2s", Lower, true, |r| Some(r.pct_over_2s)),
        (2, "write_p50_ms", Lower, true, |r| r.latency_write.as_ref().map(|l| l.p50_ms)),
        (2, "write_p95_ms", Lower, true, |r| r.latency_write.as_ref().map(|l| l.p95_ms)),
        (2, "write_p99_ms", Lower, true, |r| r.latency_write.as_ref().map(|l| l.p99_ms)),
        (2, "recall_p50_ms", Lower, true, |r| r.latency_recall.as_ref().map(|l| l.p50_ms)),
        (2, "recall_p95_ms", Lower, true, |r| r.latency_recall.as_ref().map(|l| l.p95_ms)),
        (2, "recall_p99_ms", Lower, true, |r| r.latency_recall.as_ref().map(|l| l.p99_ms)),
        (2, "ask_p50_ms", Lower, true, |r| r.latency_ask.as_ref().map(|l| l.p50_ms)),
        (2, "ask_p95_ms", Lower, true, |r| r.latency_ask.as_ref().map(|l| l.p95_ms)),
        (2, "ask_p99_ms", Lower, true, |r| r.latency_ask.as_ref().map(|l| l.p99_ms)),
        (3, "retrieval_set_p95", Lower, false, |r| r.retrieval_set_p95),
        (3, "vectors_scanned_p95", Lower, false, |r| r.vectors_scanned_p95),
        (3, "scanned_per_retrieval_mean", Info, false, |r| r.scanned_per_retrieval_mean),
        (4, "tokens_mean", Info, false, |r| r.tokens_mean),
        (4, "tokens_p95", Info, false, |r| r.tokens_p95),
        (4, "chunks_p95", Info, false, |r| r.chunks_p95),
        (4, "memrefs_p95", Info, false, |r| r.memrefs_p95),
        (5, "retrieved_value_mean", Higher, false, |r| r.retrieved_value_mean),
        (5, "top1_value_mean", Higher, false, |r| r.top1_value_mean),
        (5, "value_weighted_score_mean", Higher, false, |r| r.value_weighted_score_mean),
        (5, "high_value_hit_rate_pct", Higher, false, |r| r.high_value_hit_rate_pct),
        (5, "high_value_share_pct", Higher, false, |r| r.high_value_share_pct),
    ]
}

fn label(policy: &str) -> String {
    policy.parse::<amvl_core::PolicyKind>().map(|p| p.label().to_string()).unwrap_or_else(|_| policy.to_string())
}

pub fn compare(reports: &[RunReport]) -> Result<ComparisonTable, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFewReports(reports.len()));
    }
    let policies: Vec<String> = reports.iter().map(|r| label(&r.policy)).collect();
    let mut rows = Vec::new();
    for (table, metric, direction, wall_clock, get) in metrics() {
        let vals: Vec<Option<f64>> = reports.iter().map(get).collect();
        if vals.iter().all(Option::is_none) {
            continue;
        }
        if let Some(i) = vals.iter().position(Option::is_none) {
            return Err(CompareError::MissingMetric { policy: policies[i].clone(), metric: metric.into() });
        }
        let vals: Vec<f64> = vals.into_iter().flatten().collect();
        let mut ratios = BTreeMap::new();
        for a in 0..vals.len() {
            for b in 0..a {
                if vals[b] != 0.0 {
                    ratios.insert(format!("{}/{}", policies[a], policies[b]), vals[a] / vals[b]);
                } else if vals[a] == 0.0 {
                    ratios.insert(format!("{}/{}", policies[a], policies[b]), 1.0);
                }
            }
        }
        rows.push(ComparisonRow {
            table,
            metric: metric.into(),
            direction,
            wall_clock,
            values: policies.iter().cloned().zip(vals).collect(),
            ratios,
        });
    }
    let mut notes = Vec::new();
    if let Some(r) = rows.iter().find(|r| r.metric == "throughput_rps") {
        if let Some(x) = r.ratios.get("AMV-L/TTL") {
            notes.push(format!(
                "throughput AMV-L/TTL = {x:.2}x (headline reference gain {HEADLINE_THROUGHPUT_GAIN}x; wall-clock dependent)"
            ));
        }
    }
    Ok(ComparisonTable { policies, rows, notes })
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e9 {
        format!("{x:.0}")
    } else if x.abs() >= 100.0 {
        format!("{x:.1}")
    } else {
        format!("{x:.3}")
    }
}

impl ComparisonTable {
    /// Aligned plain-text rendering, one block per table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let ratio_keys: Vec<String> =
            self.rows.first().map(|r| r.ratios.keys().cloned().collect()).unwrap_or_default();
        let mut header = vec!["Metric".to_string(), "Direction".to_string()];
        header.extend(self.policies.iter().cloned());
        header.extend(ratio_keys.iter().cloned());
        for t in 1..=5u8 {
            let rows: Vec<&ComparisonRow> = self.rows.iter().filter(|r| r.table == t).collect();
            if rows.is_empty() {
                continue;
            }
            let mut grid = vec![header.clone()];
            for r in rows {
                let mut line = vec![r.metric.clone(), r.direction.arrow().to_string()];
                line.extend(self.policies.iter().map(|p| r.values.get(p).map(|v| fmt_num(*v)).unwrap_or_default()));
                line.extend(ratio_keys.iter().map(|k| r.ratios.get(k).map(|v| format!("{v:.2}x")).unwrap_or_default()));
                grid.push(line);
            }
            let widths: Vec<usize> =
                (0..header.len()).map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
            let _ = writeln!(out, "{}", TITLES[t as usize - 1]);
            for (i, l) in grid.iter().enumerate() {
                let cells: Vec<String> = l
                    .iter()
                    .enumerate()
                    .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                    .collect();
                let _ = writeln!(out, "  {}", cells.join("  "));
                if i == 0 {
                    let _ = writeln!(out, "  {}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                }
            }
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    pub fn value(&self, metric: &str, policy: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric)?.values.get(policy).copied()
    }
}
