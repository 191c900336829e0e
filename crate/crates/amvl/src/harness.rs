//! Benchmark protocol: one fresh store per policy, the identical trace
//! replayed against each, then analysis and comparison.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use amvl_core::embed::stable_hash;
use amvl_core::workload::{generate, EventKind, TraceEvent};
use amvl_core::{PolicyKind, VirtualClock};
use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::analyze::{analyze, AnalyzeOptions, RunReport};
use crate::compare::{compare, ComparisonTable};
use crate::config::AppConfig;
use crate::engine::{Engine, EngineOptions, QueryRequest};
use crate::maintenance::Maintainer;
use crate::persist::WalWriter;
use crate::telemetry::{RunSummaryRecord, TelemetrySink};

const TELEMETRY_QUEUE: usize = 4096;

pub fn write_trace(path: &Path, trace: &[TraceEvent]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for ev in trace {
        serde_json::to_writer(&mut w, ev)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> anyhow::Result<Vec<TraceEvent>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out: Vec<TraceEvent> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: TraceEvent = serde_json::from_str(&line).with_context(|| format!("trace line {}", i + 1))?;
        if let Some(prev) = out.last() {
            anyhow::ensure!(ev.index > prev.index, "trace line {}: request index not increasing", i + 1);
            anyhow::ensure!(ev.t >= prev.t, "trace line {}: time goes backwards", i + 1);
        }
        out.push(ev);
    }
    Ok(out)
}

/// FNV-1a digest of the trace's NDJSON form.
pub fn trace_digest(trace: &[TraceEvent]) -> String {
    let text: String = trace.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect();
    format!("{:016x}", stable_hash(&text))
}

fn dispatch(engine: &Engine, ev: &TraceEvent) {
    // Request-level failures are recorded in telemetry and show up in the
    // success rate; they do not abort the run.
    let _ = match ev.kind {
        EventKind::Write => engine.write(ev.index, &ev.namespace, &ev.text, ev.label_value.unwrap_or(0.0)).map(drop),
        EventKind::Recall | EventKind::Ask => {
            let req =
                QueryRequest { request_index: ev.index, namespace: ev.namespace.clone(), text: ev.text.clone(), n: None };
            if ev.kind == EventKind::Recall {
                engine.recall(&req).map(drop)
            } else {
                engine.ask(&req).map(drop)
            }
        }
    };
}

/// Replays `trace` against a fresh store under `policy`, writing telemetry
/// (and optionally a WAL). Returns the engine's final counters.
pub fn run_policy(
    cfg: &AppConfig,
    policy: PolicyKind,
    trace: &[TraceEvent],
    telemetry_path: &Path,
    wal_path: Option<&Path>,
) -> anyhow::Result<RunSummaryRecord> {
    let clock = Arc::new(VirtualClock::new(0.0));
    let mut opts = EngineOptions::new(policy, clock.clone());
    opts.telemetry = Some(
        TelemetrySink::create(telemetry_path, TELEMETRY_QUEUE)
            .with_context(|| format!("creating {}", telemetry_path.display()))?,
    );
    if let Some(p) = wal_path {
        opts.wal = Some(WalWriter::create(p).with_context(|| format!("creating {}", p.display()))?);
    }
    let engine = Arc::new(Engine::new(cfg, opts)?);
    anyhow::ensure!(engine.with_store(|s| s.total_count()) == 0, "store not empty at start of run");
    let maint = Maintainer::lockstep(engine.clone(), cfg.lifecycle.sweep_interval_s);

    let step = |ev: &TraceEvent| {
        clock.advance_to(ev.t);
        maint.advance(ev.t);
        dispatch(&engine, ev);
    };
    let workers = cfg.harness.workers.max(1);
    if workers == 1 {
        trace.iter().for_each(step);
    } else {
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    match trace.get(i) {
                        Some(ev) => step(ev),
                        None => break,
                    }
                });
            }
        });
    }
    maint.stop();
    engine.finish()
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    /// Defaults to the config's policy list.
    pub policies: Option<Vec<PolicyKind>>,
    pub export_trace: Option<PathBuf>,
    /// Use this trace instead of generating one.
    pub trace: Option<Vec<TraceEvent>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub table: Option<ComparisonTable>,
    pub reports: Vec<RunReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigRecord {
    pub config: AppConfig,
    pub policies: Vec<PolicyKind>,
    pub trace_events: usize,
    pub trace_digest: String,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub comparison: Comparison,
    pub summaries: Vec<RunSummaryRecord>,
    pub out_dir: PathBuf,
}

impl SuiteOutcome {
    pub fn report(&self, policy: PolicyKind) -> Option<&RunReport> {
        self.comparison.reports.iter().find(|r| r.policy == policy.as_str())
    }
}

pub fn run_suite(cfg: &AppConfig, out_dir: &Path, opts: &SuiteOptions) -> anyhow::Result<SuiteOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let policies = opts.policies.clone().unwrap_or_else(|| cfg.harness.policies.clone());
    anyhow::ensure!(!policies.is_empty(), "no policies selected");
    let trace = match &opts.trace {
        Some(t) => t.clone(),
        None => generate(&cfg.workload),
    };
    if let Some(p) = &opts.export_trace {
        write_trace(p, &trace)?;
    }
    let record = RunConfigRecord {
        config: cfg.clone(),
        policies: policies.clone(),
        trace_events: trace.len(),
        trace_digest: trace_digest(&trace),
    };
    std::fs::write(out_dir.join("run_config.json"), serde_json::to_string_pretty(&record)?)?;

    let analyze_opts = AnalyzeOptions { high_value_threshold: cfg.workload.high_value_threshold, ..Default::default() };
    let mut reports = Vec::new();
    let mut summaries = Vec::new();
    for policy in &policies {
        let tel = out_dir.join(format!("{}.ndjson", policy.as_str()));
        let wal = cfg.harness.wal.then(|| out_dir.join(format!("{}.wal.ndjson", policy.as_str())));
        let summary = run_policy(cfg, *policy, &trace, &tel, wal.as_deref())
            .with_context(|| format!("{} run failed", policy.label()))?;
        let report = analyze(&tel, &analyze_opts).with_context(|| format!("analyzing {}", tel.display()))?;
        std::fs::write(
            out_dir.join(format!("{}.report.json", policy.as_str())),
            serde_json::to_string_pretty(&report)?,
        )?;
        summaries.push(summary);
        reports.push(report);
    }
    let table = if reports.len() >= 2 { Some(compare(&reports)?) } else { None };
    let comparison = Comparison { table, reports };
    std::fs::write(out_dir.join("comparison.json"), serde_json::to_string_pretty(&comparison)?)?;
    let text = comparison.table.as_ref().map(|t| t.render()).unwrap_or_default();
    std::fs::write(out_dir.join("tables.txt"), text)?;
    write_csvs(out_dir, &comparison.reports)?;
    Ok(SuiteOutcome { comparison, summaries, out_dir: out_dir.to_path_buf() })
}

fn write_csvs(out_dir: &Path, reports: &[RunReport]) -> anyhow::Result<()> {
    let mut ccdf = csv::Writer::from_path(out_dir.join("ccdf.csv"))?;
    ccdf.write_record(["policy", "latency_ms", "ccdf"])?;
    let mut stored = csv::Writer::from_path(out_dir.join("stored_items.csv"))?;
    stored.write_record(["policy", "t_virtual_s", "stored"])?;
    let mut tput = csv::Writer::from_path(out_dir.join("throughput.csv"))?;
    tput.write_record(["policy", "bucket_start_s", "rps"])?;
    for r in reports {
        for p in &r.latency_ccdf {
            ccdf.write_record([r.policy.clone(), p.latency_ms.to_string(), p.ccdf.to_string()])?;
        }
        for p in &r.stored_items_timeseries {
            stored.write_record([r.policy.clone(), p.t.to_string(), p.value.to_string()])?;
        }
        for p in &r.throughput_timeseries {
            tput.write_record([r.policy.clone(), p.t.to_string(), p.value.to_string()])?;
        }
    }
    ccdf.flush()?;
    stored.flush()?;
    tput.flush()?;
    Ok(())
}

/// Runs one policy over an exported trace and analyzes the result.
pub fn replay(cfg: &AppConfig, trace_path: &Path, policy: PolicyKind, telemetry_out: &Path) -> anyhow::Result<RunReport> {
    let trace = read_trace(trace_path)?;
    run_policy(cfg, policy, &trace, telemetry_out, None)?;
    let opts = AnalyzeOptions { high_value_threshold: cfg.workload.high_value_threshold, ..Default::default() };
    Ok(analyze(telemetry_out, &opts)?)
}
