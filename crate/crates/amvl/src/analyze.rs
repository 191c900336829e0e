//! Offline analysis of one telemetry file into a [`RunReport`].

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use amvl_core::stats::{percentile, percentile_sorted};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::telemetry::{LifecycleSnapshotRecord, RequestRecord, RunSummaryRecord};

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: not valid JSON")]
    Parse(usize),
    #[error("line {line}: bad or missing field {field}")]
    Schema { line: usize, field: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub latency_ms: f64,
    /// Fraction of requests strictly slower than `latency_ms`.
    pub ccdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub requests: usize,
    pub orphan_lines: usize,
    pub excluded_health: usize,
    pub success_rate_pct: f64,
    pub throughput_rps: Option<f64>,
    pub latency: Option<LatencySummary>,
    pub latency_write: Option<LatencySummary>,
    pub latency_recall: Option<LatencySummary>,
    pub latency_ask: Option<LatencySummary>,
    pub pct_over_1s: f64,
    pub pct_over_2s: f64,
    pub retrieval_requests: usize,
    pub retrieval_set_p95: Option<f64>,
    pub retrieval_set_max: Option<f64>,
    pub vectors_scanned_p95: Option<f64>,
    pub vectors_scanned_p99: Option<f64>,
    pub scanned_per_retrieval_mean: Option<f64>,
    pub tokens_mean: Option<f64>,
    pub tokens_p95: Option<f64>,
    pub chunks_p95: Option<f64>,
    pub chunks_max: Option<f64>,
    pub memrefs_p95: Option<f64>,
    pub prompt_cap_n: Option<usize>,
    pub retrieved_value_mean: Option<f64>,
    pub top1_value_mean: Option<f64>,
    pub value_weighted_score_mean: Option<f64>,
    pub high_value_hit_rate_pct: Option<f64>,
    pub high_value_share_pct: Option<f64>,
    /// Requests with `candidate_size` above their recorded bound.
    pub bound_violations: usize,
    /// Requests injecting more than the cap.
    pub cap_violations: usize,
    /// Requests injecting something other than `min(cap, candidate_size)`.
    pub cap_mismatches: usize,
    pub stored_items_timeseries: Vec<TimePoint>,
    pub throughput_timeseries: Vec<TimePoint>,
    pub latency_ccdf: Vec<CcdfPoint>,
    pub summary: Option<RunSummaryRecord>,
}

/// Keys whose values depend on wall-clock timing.
pub const WALL_CLOCK_FIELDS: &[&str] = &[
    "ts_wall",
    "throughput_rps",
    "latency",
    "latency_write",
    "latency_recall",
    "latency_ask",
    "pct_over_1s",
    "pct_over_2s",
    "throughput_timeseries",
    "latency_ccdf",
];

/// Removes wall-clock keys (and table rows flagged `wall_clock`) in place.
pub fn strip_wall_clock(v: &mut Value) {
    match v {
        Value::Object(m) => {
            for k in WALL_CLOCK_FIELDS {
                m.remove(*k);
            }
            for x in m.values_mut() {
                strip_wall_clock(x);
            }
        }
        Value::Array(a) => {
            a.retain(|x| x.get("wall_clock") != Some(&Value::Bool(true)));
            for x in a.iter_mut() {
                strip_wall_clock(x);
            }
        }
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub high_value_threshold: f64,
    /// Width of throughput buckets in wall seconds.
    pub bucket_s: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { high_value_threshold: 0.8, bucket_s: 10.0 }
    }
}

fn schema(line: usize, e: &serde_json::Error) -> AnalyzeError {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| msg.split(" at line").next().unwrap_or(&msg).to_string());
    AnalyzeError::Schema { line, field }
}

fn p(samples: &[f64], q: f64) -> Option<f64> {
    percentile(samples, q).ok()
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn latency_summary(us: &[f64]) -> Option<LatencySummary> {
    let mut ms: Vec<f64> = us.iter().map(|x| x / 1000.0).collect();
    if ms.is_empty() {
        return None;
    }
    ms.sort_by(f64::total_cmp);
    Some(LatencySummary {
        count: ms.len(),
        p50_ms: percentile_sorted(&ms, 50.0),
        p95_ms: percentile_sorted(&ms, 95.0),
        p99_ms: percentile_sorted(&ms, 99.0),
    })
}

/// `P(latency > x)` at every distinct sample.
pub fn ccdf(latencies_ms: &[f64]) -> Vec<CcdfPoint> {
    let mut s = latencies_ms.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        while i < s.len() && s[i] == x {
            i += 1;
        }
        out.push(CcdfPoint { latency_ms: x, ccdf: (s.len() - i) as f64 / n });
    }
    out
}

pub fn analyze(path: &Path, opts: &AnalyzeOptions) -> Result<RunReport, AnalyzeError> {
    analyze_reader(BufReader::new(File::open(path)?), opts)
}

pub fn analyze_reader<R: BufRead>(input: R, opts: &AnalyzeOptions) -> Result<RunReport, AnalyzeError> {
    let mut requests: Vec<RequestRecord> = Vec::new();
    let mut snapshots: Vec<LifecycleSnapshotRecord> = Vec::new();
    let mut summary = None;
    let mut orphans = 0;
    let mut health = 0;
    let mut seen = BTreeSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|_| AnalyzeError::Parse(no))?;
        match v.get("type").and_then(Value::as_str) {
            Some("request") => {
                let r: RequestRecord = serde_json::from_value(v).map_err(|e| schema(no, &e))?;
                if r.kind == "health" {
                    health += 1;
                } else if !seen.insert(r.request_index) {
                    orphans += 1;
                } else {
                    requests.push(r);
                }
            }
            Some("lifecycle_snapshot") => snapshots.push(serde_json::from_value(v).map_err(|e| schema(no, &e))?),
            Some("run_summary") => summary = Some(serde_json::from_value(v).map_err(|e| schema(no, &e))?),
            _ => orphans += 1,
        }
    }
    requests.sort_by_key(|r| r.request_index);
    Ok(build_report(&requests, &snapshots, summary, orphans, health, opts))
}

fn build_report(
    requests: &[RequestRecord],
    snapshots: &[LifecycleSnapshotRecord],
    summary: Option<RunSummaryRecord>,
    orphan_lines: usize,
    excluded_health: usize,
    opts: &AnalyzeOptions,
) -> RunReport {
    let thr = opts.high_value_threshold;
    let policy = requests
        .first()
        .map(|r| r.policy.clone())
        .or_else(|| summary.as_ref().map(|s| s.policy.clone()))
        .unwrap_or_default();
    let ok: Vec<&RequestRecord> = requests.iter().filter(|r| r.ok).collect();
    let lat = |kind: Option<&str>| -> Vec<f64> {
        ok.iter().filter(|r| kind.is_none_or(|k| r.kind == k)).map(|r| r.latency_us).collect()
    };
    let all_lat = lat(None);
    let over = |s: f64| {
        if requests.is_empty() {
            0.0
        } else {
            100.0 * requests.iter().filter(|r| r.latency_us > s * 1e6).count() as f64 / requests.len() as f64
        }
    };

    let ts: Vec<f64> = ok.iter().map(|r| r.ts_wall).collect();
    let (t_first, t_last) = ts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let throughput_rps = (ok.len() > 1 && t_last > t_first).then(|| ok.len() as f64 / (t_last - t_first));
    let mut throughput_timeseries = Vec::new();
    if !ts.is_empty() {
        let nb = ((t_last - t_first) / opts.bucket_s).floor() as usize + 1;
        let mut counts = vec![0usize; nb];
        for t in &ts {
            counts[(((t - t_first) / opts.bucket_s).floor() as usize).min(nb - 1)] += 1;
        }
        throughput_timeseries = counts
            .iter()
            .enumerate()
            .map(|(i, c)| TimePoint { t: i as f64 * opts.bucket_s, value: *c as f64 / opts.bucket_s })
            .collect();
    }

    let retr: Vec<&RequestRecord> = ok.iter().copied().filter(|r| r.kind == "recall" || r.kind == "ask").collect();
    let asks: Vec<&RequestRecord> = ok.iter().copied().filter(|r| r.kind == "ask").collect();
    let f = |g: &dyn Fn(&RequestRecord) -> f64, rs: &[&RequestRecord]| -> Vec<f64> { rs.iter().map(|r| g(r)).collect() };
    let cand = f(&|r| r.candidate_size as f64, &retr);
    let scanned = f(&|r| r.vectors_scanned as f64, &retr);
    let per_retrieval: Vec<f64> =
        retr.iter().filter(|r| r.candidate_size > 0).map(|r| r.vectors_scanned as f64 / r.candidate_size as f64).collect();
    let tokens = f(&|r| r.token_count as f64, &asks);
    let chunks = f(&|r| r.injected_count as f64, &retr);
    let memrefs = f(&|r| r.injected_ids.len() as f64, &asks);

    let labels: Vec<f64> = retr.iter().flat_map(|r| r.injected_label_values.iter().copied()).collect();
    let top1: Vec<f64> = retr.iter().filter_map(|r| r.injected_label_values.first().copied()).collect();
    let weighted: Vec<f64> = retr
        .iter()
        .map(|r| {
            let s: f64 = r.injected_similarities.iter().zip(&r.injected_label_values).map(|(s, l)| s * l).sum();
            s / r.prompt_cap_n.max(1) as f64
        })
        .collect();
    let hit_rate = (!retr.is_empty()).then(|| {
        100.0 * retr.iter().filter(|r| r.injected_label_values.iter().any(|l| *l >= thr)).count() as f64
            / retr.len() as f64
    });
    let share =
        (!labels.is_empty()).then(|| 100.0 * labels.iter().filter(|l| **l >= thr).count() as f64 / labels.len() as f64);

    let bound_violations = retr.iter().filter(|r| r.bound.is_some_and(|b| r.candidate_size > b)).count();
    let cap_violations = retr.iter().filter(|r| r.injected_count > r.prompt_cap_n).count();
    let cap_mismatches =
        retr.iter().filter(|r| r.injected_count != r.prompt_cap_n.min(r.candidate_size)).count();

    let all_ms: Vec<f64> = all_lat.iter().map(|x| x / 1000.0).collect();
    RunReport {
        policy,
        requests: requests.len(),
        orphan_lines,
        excluded_health,
        success_rate_pct: if requests.is_empty() { 100.0 } else { 100.0 * ok.len() as f64 / requests.len() as f64 },
        throughput_rps,
        latency: latency_summary(&all_lat),
        latency_write: latency_summary(&lat(Some("write"))),
        latency_recall: latency_summary(&lat(Some("recall"))),
        latency_ask: latency_summary(&lat(Some("ask"))),
        pct_over_1s: over(1.0),
        pct_over_2s: over(2.0),
        retrieval_requests: retr.len(),
        retrieval_set_p95: p(&cand, 95.0),
        retrieval_set_max: cand.iter().copied().reduce(f64::max),
        vectors_scanned_p95: p(&scanned, 95.0),
        vectors_scanned_p99: p(&scanned, 99.0),
        scanned_per_retrieval_mean: mean(&per_retrieval),
        tokens_mean: mean(&tokens),
        tokens_p95: p(&tokens, 95.0),
        chunks_p95: p(&chunks, 95.0),
        chunks_max: chunks.iter().copied().reduce(f64::max),
        memrefs_p95: p(&memrefs, 95.0),
        prompt_cap_n: retr.first().map(|r| r.prompt_cap_n),
        retrieved_value_mean: mean(&labels),
        top1_value_mean: mean(&top1),
        value_weighted_score_mean: mean(&weighted),
        high_value_hit_rate_pct: hit_rate,
        high_value_share_pct: share,
        bound_violations,
        cap_violations,
        cap_mismatches,
        stored_items_timeseries: snapshots.iter().map(|s| TimePoint { t: s.t_virtual, value: s.stored as f64 }).collect(),
        throughput_timeseries,
        latency_ccdf: ccdf(&all_ms),
        summary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{PhaseDurations, Record};

    fn rec(i: u64, kind: &str, latency_us: f64, labels: &[f64]) -> RequestRecord {
        RequestRecord {
            ts_wall: 1000.0 + i as f64 * 0.01,
            t_virtual: i as f64,
            request_index: i,
            kind: kind.into(),
            policy: "amvl".into(),
            namespace: "default".into(),
            ok: true,
            error: None,
            item_id: None,
            candidate_size: labels.len(),
            hot_size: 0,
            warm_size: 0,
            bound: None,
            vectors_scanned: labels.len(),
            prompt_cap_n: 48,
            injected_count: labels.len(),
            token_count: 10,
            phase_durations_us: PhaseDurations::default(),
            latency_us,
            injected_ids: (0..labels.len() as u64).collect(),
            injected_label_values: labels.to_vec(),
            injected_similarities: vec![1.0; labels.len()],
        }
    }

    fn ndjson(recs: &[RequestRecord]) -> String {
        recs.iter().map(|r| serde_json::to_string(&Record::Request(r.clone())).unwrap() + "\n").collect()
    }

    fn run(text: &str) -> RunReport {
        analyze_reader(text.as_bytes(), &AnalyzeOptions::default()).unwrap()
    }

    #[test]
    fn all_labels_one() {
        let r = run(&ndjson(&[rec(0, "recall", 10.0, &[1.0, 1.0]), rec(1, "ask", 10.0, &[1.0])]));
        assert_eq!(r.retrieved_value_mean, Some(1.0));
        assert_eq!(r.high_value_share_pct, Some(100.0));
    }

    #[test]
    fn one_slow_request_in_a_hundred() {
        let mut recs: Vec<_> = (0..100).map(|i| rec(i, "recall", 1000.0, &[0.5])).collect();
        recs[17].latency_us = 2.5e6;
        let r = run(&ndjson(&recs));
        assert_eq!(r.pct_over_2s, 1.0);
        assert_eq!(r.pct_over_1s, 1.0);
    }

    #[test]
    fn health_dropped_and_unknown_orphaned() {
        let mut text = ndjson(&[rec(0, "recall", 5.0, &[0.2]), rec(1, "health", 5.0, &[])]);
        text.push_str("{\"type\":\"mystery\"}\n");
        text.push_str(&ndjson(&[rec(0, "recall", 5.0, &[0.2])]));
        let r = run(&text);
        assert_eq!((r.requests, r.excluded_health, r.orphan_lines), (1, 1, 2));
    }

    #[test]
    fn parse_and_schema_errors() {
        let bad = analyze_reader("{\"type\":\"request\"}\n".as_bytes(), &AnalyzeOptions::default());
        assert!(matches!(bad, Err(AnalyzeError::Schema { line: 1, .. })), "{bad:?}");
        let bad = analyze_reader("\n{oops\n".as_bytes(), &AnalyzeOptions::default());
        assert!(matches!(bad, Err(AnalyzeError::Parse(2))));
    }

    #[test]
    fn ccdf_is_nonincreasing() {
        let c = ccdf(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(c.iter().map(|p| p.ccdf).collect::<Vec<_>>(), vec![0.75, 0.25, 0.0]);
    }

    #[test]
    fn strip_removes_wall_fields() {
        let mut v = serde_json::json!({"a": 1, "ts_wall": 2, "rows": [{"wall_clock": true}, {"wall_clock": false, "latency": 3}]});
        strip_wall_clock(&mut v);
        assert_eq!(v, serde_json::json!({"a": 1, "rows": [{"wall_clock": false}]}));
    }
}
