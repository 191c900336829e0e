use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use amvl::analyze::{analyze, AnalyzeOptions};
use amvl::checks;
use amvl::config::AppConfig;
use amvl::engine::{Engine, EngineOptions, WallClock};
use amvl::gateway;
use amvl::harness::{read_trace, run_suite, SuiteOptions};
use amvl::maintenance::Maintainer;
use amvl::persist::WalWriter;
use amvl::telemetry::TelemetrySink;
use amvl_core::workload::Scale;
use amvl_core::PolicyKind;
use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amvl", version, about = "Value-tiered agent memory: benchmark harness and service")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay one seeded trace against each policy, then analyze and compare.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        scale: Option<ScaleArg>,
        /// Overrides the workload seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Subset of policies (ttl, lru, amvl); repeat or comma-separate.
        #[arg(long, value_delimiter = ',', value_parser = parse_policy)]
        policy: Vec<PolicyKind>,
        /// Evaluate the acceptance criteria; exit 2 if any fails.
        #[arg(long)]
        check: bool,
        /// Write the generated trace as NDJSON.
        #[arg(long)]
        export_trace: Option<PathBuf>,
        /// Replay this trace instead of generating one.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Summarize telemetry files.
    Analyze {
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        high_value_threshold: f64,
    },
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|_| format!("unknown policy {s:?} (expected ttl, lru or amvl)"))
}

fn load(config: Option<PathBuf>) -> anyhow::Result<AppConfig> {
    match config {
        Some(p) => AppConfig::load(&p),
        None => Ok(AppConfig::default()),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { config, out, scale, seed, policy, check, export_trace, replay } => {
            let mut cfg = load(config)?;
            if let Some(s) = scale {
                cfg = cfg.with_scale(match s {
                    ScaleArg::Desk => Scale::Desk,
                    ScaleArg::Paper => Scale::Paper,
                });
            }
            if let Some(s) = seed {
                cfg.workload.seed = s;
            }
            let trace = replay.as_deref().map(read_trace).transpose()?;
            let opts = SuiteOptions {
                policies: (!policy.is_empty()).then_some(policy),
                export_trace,
                trace,
            };
            let outcome = run_suite(&cfg, &out, &opts)?;
            if let Some(t) = &outcome.comparison.table {
                print!("{}", t.render());
            }
            println!("artifacts written to {}", out.display());
            if check {
                let results = checks::evaluate(&outcome.comparison.reports);
                for r in &results {
                    println!("{}", r.line());
                }
                if results.iter().any(|r| !r.passed) {
                    return Ok(ExitCode::from(2));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Serve { config, listen } => {
            let cfg = load(config)?;
            let gw = cfg.gateway.clone();
            let addr = listen.unwrap_or(gw.listen.clone()).parse().context("parsing listen address")?;
            let mut opts = EngineOptions::new(gw.policy, Arc::new(WallClock::new()));
            opts.namespaces = Some(gw.namespaces.clone());
            if let Some(p) = &gw.telemetry_path {
                opts.telemetry = Some(TelemetrySink::create(p.as_ref(), 4096)?);
            }
            if let Some(p) = &gw.wal_path {
                opts.wal = Some(WalWriter::append_to(p.as_ref())?);
            }
            let engine = Arc::new(Engine::new(&cfg, opts)?);
            let maint = Maintainer::timer(engine.clone(), Duration::from_secs_f64(gw.sweep_interval_s));
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            eprintln!("listening on {addr} ({} policy)", gw.policy.label());
            rt.block_on(gateway::serve(engine.clone(), addr, gw.workers))?;
            maint.stop();
            engine.finish()?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Analyze { files, high_value_threshold } => {
            anyhow::ensure!(!files.is_empty(), "no telemetry files given");
            let opts = AnalyzeOptions { high_value_threshold, ..Default::default() };
            let mut reports = Vec::new();
            for f in &files {
                reports.push(analyze(f, &opts).with_context(|| format!("analyzing {}", f.display()))?);
            }
            println!("{}", serde_json::to_string_pretty(&reports)?);
            if reports.len() >= 2 {
                eprint!("{}", amvl::compare::compare(&reports)?.render());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
