//! NDJSON telemetry records and a background writer fed by a bounded queue.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::mpsc::{sync_channel, SyncSender};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

/// Wall-clock microseconds spent in each request phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseDurations {
    pub embed: f64,
    pub candidates: f64,
    pub scan: f64,
    pub assemble: f64,
    pub answer: f64,
    pub feedback: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub ts_wall: f64,
    pub t_virtual: f64,
    pub request_index: u64,
    /// `write`, `recall`, `ask` (or `health`, which analysis drops).
    pub kind: String,
    pub policy: String,
    pub namespace: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<u64>,
    pub candidate_size: usize,
    pub hot_size: usize,
    pub warm_size: usize,
    /// `|T_H| + k` at build time, AMV-L only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    pub vectors_scanned: usize,
    pub prompt_cap_n: usize,
    pub injected_count: usize,
    pub token_count: usize,
    pub phase_durations_us: PhaseDurations,
    pub latency_us: f64,
    pub injected_ids: Vec<u64>,
    pub injected_label_values: Vec<f64>,
    pub injected_similarities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleSnapshotRecord {
    pub ts_wall: f64,
    pub t_virtual: f64,
    pub policy: String,
    pub hot: usize,
    pub warm: usize,
    pub cold: usize,
    pub stored: usize,
    pub visited: usize,
    pub decayed: usize,
    pub promoted: usize,
    pub demoted: usize,
    pub evicted: usize,
    pub expired: usize,
    pub cursor: u64,
    pub queue_drained: usize,
}

/// Engine counters at the end of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummaryRecord {
    pub ts_wall: f64,
    pub policy: String,
    pub initial_items: usize,
    pub requests: u64,
    pub errors: u64,
    pub sweeps: u64,
    pub promoted: u64,
    pub demoted: u64,
    pub evicted: u64,
    pub expired: u64,
    pub queue_dropped: u64,
    pub request_path_sweeps: u64,
    pub request_path_tier_changes: u64,
    pub request_path_evictions: u64,
    pub bound_violations: u64,
    pub cap_violations: u64,
    pub final_stored: usize,
    pub final_tiers: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Request(RequestRecord),
    LifecycleSnapshot(LifecycleSnapshotRecord),
    RunSummary(RunSummaryRecord),
}

pub fn wall_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

enum Msg {
    Line(String),
    Close,
}

/// Single-consumer NDJSON writer. Producers block when the queue is full,
/// so records are never dropped.
pub struct TelemetrySink {
    tx: SyncSender<Msg>,
    handle: Mutex<Option<JoinHandle<io::Result<u64>>>>,
}

impl TelemetrySink {
    pub fn create(path: &Path, capacity: usize) -> io::Result<Self> {
        let file = File::create(path)?;
        Ok(Self::from_writer(BufWriter::new(file), capacity))
    }

    pub fn from_writer<W: Write + Send + 'static>(mut out: W, capacity: usize) -> Self {
        let (tx, rx) = sync_channel::<Msg>(capacity.max(1));
        let handle = std::thread::Builder::new()
            .name("telemetry".into())
            .spawn(move || -> io::Result<u64> {
                let mut n = 0;
                for msg in rx {
                    match msg {
                        Msg::Line(l) => {
                            out.write_all(l.as_bytes())?;
                            out.write_all(b"\n")?;
                            n += 1;
                        }
                        Msg::Close => break,
                    }
                }
                out.flush()?;
                Ok(n)
            })
            .expect("spawn telemetry writer");
        TelemetrySink { tx, handle: Mutex::new(Some(handle)) }
    }

    pub fn emit(&self, rec: &Record) {
        let line = serde_json::to_string(rec).expect("record serializes");
        // A closed sink means the run is over; late records are discarded.
        let _ = self.tx.send(Msg::Line(line));
    }

    /// Flushes and stops the writer. Returns the number of lines written.
    pub fn close(&self) -> io::Result<u64> {
        let Some(h) = self.handle.lock().take() else { return Ok(0) };
        let _ = self.tx.send(Msg::Close);
        h.join().map_err(|_| io::Error::other("telemetry writer panicked"))?
    }
}

impl Drop for TelemetrySink {
    fn drop(&mut self) {
        let _ = self.close();
    }
}
