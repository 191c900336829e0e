//! The memory engine: one store behind a reader-writer lock, the request
//! pipeline (write / recall / ask), and the maintenance entry point used by
//! the background thread.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use amvl_core::config::ClockMode;
use amvl_core::embed::TopicEmbedder;
use amvl_core::lifecycle::{reconcile_item, sweep_batch_ids, SweepCursor};
use amvl_core::policy::{
    apply_feedback, build_candidates_amvl, build_candidates_lru, build_candidates_ttl, request_rng, CandidateSet,
};
use amvl_core::prompt::{mock_answer, ConversationBuffer, PromptContext};
use amvl_core::store::{EvictionRule, StoreOptions};
use amvl_core::{
    Clock, LifecycleThresholds, MemoryStore, PolicyKind, RetrievalConfig, StoreError, SweepReport, Tier, ValueParams,
};
use crossbeam_queue::ArrayQueue;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::config::AppConfig;
use crate::persist::WalWriter;
use crate::telemetry::{
    wall_now, LifecycleSnapshotRecord, PhaseDurations, Record, RequestRecord, RunSummaryRecord, TelemetrySink,
};

/// Seconds since construction, on the monotonic clock.
#[derive(Debug)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock { start: Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn mode(&self) -> ClockMode {
        ClockMode::Wall
    }
}

thread_local! {
    static IN_REQUEST: Cell<u32> = const { Cell::new(0) };
}

/// Marks the current thread as inside a request handler until dropped.
struct RequestScope;

impl RequestScope {
    fn enter() -> Self {
        IN_REQUEST.with(|c| c.set(c.get() + 1));
        RequestScope
    }
}

impl Drop for RequestScope {
    fn drop(&mut self) {
        IN_REQUEST.with(|c| c.set(c.get() - 1));
    }
}

/// True while the calling thread is handling a write, recall or ask.
pub fn in_request_path() -> bool {
    IN_REQUEST.with(|c| c.get() > 0)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("content must not be empty")]
    EmptyContent,
    #[error("unknown namespace {0:?}")]
    UnknownNamespace(String),
    #[error("requested {requested} items but the prompt cap is {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("store: {0}")]
    Store(String),
}

impl From<StoreError> for EngineError {
    fn from(e: StoreError) -> Self {
        EngineError::Store(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub request_index: u64,
    pub namespace: String,
    pub text: String,
    /// Defaults to the prompt cap; larger values are rejected.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteOutcome {
    pub id: u64,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: u64,
    pub similarity: f64,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallOutcome {
    pub hits: Vec<Hit>,
    pub candidate_size: usize,
    pub vectors_scanned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskOutcome {
    pub answer: String,
    pub citations: Vec<u64>,
    pub token_count: usize,
    pub candidate_size: usize,
    pub vectors_scanned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierCounts {
    pub hot: usize,
    pub warm: usize,
    pub cold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub policy: String,
    pub stored: usize,
    pub total_written: usize,
    pub tiers: TierCounts,
    pub counters: RunSummaryRecord,
}

#[derive(Default)]
struct Counters {
    requests: AtomicU64,
    errors: AtomicU64,
    sweeps: AtomicU64,
    promoted: AtomicU64,
    demoted: AtomicU64,
    evicted: AtomicU64,
    expired: AtomicU64,
    queue_dropped: AtomicU64,
    request_path_sweeps: AtomicU64,
    request_path_tier_changes: AtomicU64,
    request_path_evictions: AtomicU64,
    bound_violations: AtomicU64,
    cap_violations: AtomicU64,
}

fn bump(c: &AtomicU64, n: u64) {
    c.fetch_add(n, Ordering::Relaxed);
}

fn get(c: &AtomicU64) -> u64 {
    c.load(Ordering::Relaxed)
}

/// Everything needed to construct an [`Engine`] besides the config.
pub struct EngineOptions {
    pub policy: PolicyKind,
    pub clock: Arc<dyn Clock>,
    pub telemetry: Option<TelemetrySink>,
    pub wal: Option<WalWriter>,
    /// Accepted namespaces; `None` accepts any.
    pub namespaces: Option<Vec<String>>,
    /// Start from this store instead of an empty one.
    pub store: Option<MemoryStore>,
}

impl EngineOptions {
    pub fn new(policy: PolicyKind, clock: Arc<dyn Clock>) -> Self {
        EngineOptions { policy, clock, telemetry: None, wal: None, namespaces: None, store: None }
    }
}

struct Retrieved {
    cands: CandidateSet,
    hot_size: usize,
    bound: Option<usize>,
    scanned: usize,
    /// `(id, similarity, content, label)`, similarity descending.
    hits: Vec<(u64, f64, String, f64)>,
}

pub struct Engine {
    cfg: AppConfig,
    policy: PolicyKind,
    params: ValueParams,
    thresholds: LifecycleThresholds,
    retrieval: RetrievalConfig,
    ttl_window: f64,
    run_seed: u64,
    store: RwLock<MemoryStore>,
    embedder: TopicEmbedder,
    clock: Arc<dyn Clock>,
    pending: ArrayQueue<u64>,
    conversation: Mutex<ConversationBuffer>,
    cursor: Mutex<SweepCursor>,
    sweep_lock: Mutex<()>,
    telemetry: Option<TelemetrySink>,
    wal: Option<Mutex<WalWriter>>,
    namespaces: Option<BTreeSet<String>>,
    counters: Counters,
    next_index: AtomicU64,
    initial_items: usize,
}

impl Engine {
    pub fn new(cfg: &AppConfig, opts: EngineOptions) -> anyhow::Result<Self> {
        cfg.validate()?;
        let params = cfg.value;
        let thresholds = cfg.lifecycle.thresholds();
        let store_opts = StoreOptions {
            max_items: cfg.store.max_items,
            track_ttl: opts.policy == PolicyKind::Ttl,
            track_lru: opts.policy == PolicyKind::Lru,
        };
        let mut store = match opts.store {
            Some(s) => s,
            None => MemoryStore::new(cfg.retrieval.embedding_dim, params, thresholds, store_opts),
        };
        if store.dim() != cfg.retrieval.embedding_dim {
            anyhow::bail!("store dimension {} does not match config {}", store.dim(), cfg.retrieval.embedding_dim);
        }
        if opts.wal.is_some() {
            store.enable_journal();
        }
        let initial_items = store.live_count();
        let next_index = store.next_id();
        Ok(Engine {
            policy: opts.policy,
            params,
            thresholds,
            retrieval: cfg.retrieval,
            ttl_window: cfg.policy.ttl_window(),
            run_seed: cfg.workload.seed,
            store: RwLock::new(store),
            embedder: TopicEmbedder::new(cfg.embed_config()),
            clock: opts.clock,
            pending: ArrayQueue::new(cfg.lifecycle.transition_queue_capacity),
            conversation: Mutex::new(ConversationBuffer::new(cfg.prompt.conversation_turns)),
            cursor: Mutex::new(SweepCursor::default()),
            sweep_lock: Mutex::new(()),
            telemetry: opts.telemetry,
            wal: opts.wal.map(Mutex::new),
            namespaces: opts.namespaces.map(|v| v.into_iter().collect()),
            counters: Counters::default(),
            next_index: AtomicU64::new(next_index),
            initial_items,
            cfg: cfg.clone(),
        })
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn config(&self) -> &AppConfig {
        &self.cfg
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn prompt_cap(&self) -> usize {
        self.retrieval.prompt_cap_n
    }

    /// Request index for callers that do not carry their own (HTTP).
    pub fn next_request_index(&self) -> u64 {
        self.next_index.fetch_add(1, Ordering::Relaxed)
    }

    /// Read access for inspection and tests.
    pub fn with_store<R>(&self, f: impl FnOnce(&MemoryStore) -> R) -> R {
        f(&self.store.read())
    }

    fn check_namespace(&self, ns: &str) -> Result<(), EngineError> {
        match &self.namespaces {
            Some(allowed) if !allowed.contains(ns) => Err(EngineError::UnknownNamespace(ns.into())),
            _ => Ok(()),
        }
    }

    fn flush_journal(&self, store: &mut MemoryStore) {
        if let Some(w) = &self.wal {
            let muts = store.take_journal();
            if !muts.is_empty() {
                if let Err(e) = w.lock().append(&muts) {
                    bump(&self.counters.errors, 1);
                    eprintln!("wal append failed: {e}");
                }
            }
        }
    }

    fn emit(&self, rec: Record) {
        if let Some(t) = &self.telemetry {
            t.emit(&rec);
        }
    }

    fn base_record(&self, kind: &str, request_index: u64, namespace: &str, t_virtual: f64) -> RequestRecord {
        RequestRecord {
            ts_wall: 0.0,
            t_virtual,
            request_index,
            kind: kind.into(),
            policy: self.policy.as_str().into(),
            namespace: namespace.into(),
            ok: true,
            error: None,
            item_id: None,
            candidate_size: 0,
            hot_size: 0,
            warm_size: 0,
            bound: None,
            vectors_scanned: 0,
            prompt_cap_n: self.retrieval.prompt_cap_n,
            injected_count: 0,
            token_count: 0,
            phase_durations_us: PhaseDurations::default(),
            latency_us: 0.0,
            injected_ids: Vec::new(),
            injected_label_values: Vec::new(),
            injected_similarities: Vec::new(),
        }
    }

    fn finish_record(&self, mut rec: RequestRecord, started: Instant, err: Option<&EngineError>) {
        bump(&self.counters.requests, 1);
        if let Some(e) = err {
            bump(&self.counters.errors, 1);
            rec.ok = false;
            rec.error = Some(e.to_string());
        }
        rec.latency_us = us(started);
        rec.ts_wall = wall_now();
        self.emit(Record::Request(rec));
    }

    /// Stores `content` with a ground-truth label. The label is evaluation
    /// metadata and is never read by candidate building or feedback.
    pub fn write(&self, request_index: u64, namespace: &str, content: &str, label_value: f64) -> Result<WriteOutcome, EngineError> {
        let _scope = RequestScope::enter();
        let started = Instant::now();
        let t_virtual = self.clock.now();
        let mut rec = self.base_record("write", request_index, namespace, t_virtual);
        let res = (|| {
            self.check_namespace(namespace)?;
            if content.trim().is_empty() {
                return Err(EngineError::EmptyContent);
            }
            if !(0.0..=1.0).contains(&label_value) {
                return Err(EngineError::InvalidRequest("label_value must lie in [0, 1]".into()));
            }
            let t0 = Instant::now();
            let emb = self.embedder.embed_item(content);
            rec.phase_durations_us.embed = us(t0);
            let mut s = self.store.write();
            let t = self.clock.now();
            let id = s.put(namespace, content, emb, label_value, t)?;
            let tier = s.get(id)?.tier;
            self.flush_journal(&mut s);
            Ok(WriteOutcome { id, tier })
        })();
        if let Ok(w) = &res {
            rec.item_id = Some(w.id);
        }
        self.finish_record(rec, started, res.as_ref().err());
        res
    }

    fn build(&self, store: &MemoryStore, request_index: u64, t: f64) -> (CandidateSet, Vec<u64>) {
        match self.policy {
            PolicyKind::Amvl => {
                let mut rng = request_rng(self.run_seed, request_index);
                (build_candidates_amvl(store, &self.retrieval, &mut rng, t), Vec::new())
            }
            PolicyKind::Ttl => build_candidates_ttl(store, self.ttl_window, t),
            PolicyKind::Lru => (build_candidates_lru(store, self.cfg.policy.lru_capacity, t), Vec::new()),
        }
    }

    fn retrieve(&self, req: &QueryRequest, n: usize, phases: &mut PhaseDurations) -> Result<Retrieved, EngineError> {
        let t0 = Instant::now();
        let q = self.embedder.embed_query(&req.text);
        phases.embed = us(t0);

        let s = self.store.read();
        let t1 = Instant::now();
        let t = self.clock.now();
        let hot_size = s.tier_set(Tier::Hot).len();
        let (mut cands, expired) = self.build(&s, req.request_index, t);
        let same_ns = |id: &u64| s.get(*id).map(|it| it.namespace == req.namespace).unwrap_or(false);
        cands.ids.retain(same_ns);
        cands.hot_part.retain(same_ns);
        cands.warm_part.retain(same_ns);
        for id in expired {
            if self.pending.push(id).is_err() {
                bump(&self.counters.queue_dropped, 1);
            }
        }
        phases.candidates = us(t1);

        let t2 = Instant::now();
        let scan = s.index().scan(&q, &cands.ids, n).map_err(|e| EngineError::Store(e.to_string()))?;
        let hits = scan
            .hits
            .iter()
            .filter_map(|&(id, sim)| s.get(id).ok().map(|it| (id, sim, it.content.clone(), it.label_value)))
            .collect();
        phases.scan = us(t2);
        let bound = (self.policy == PolicyKind::Amvl).then_some(hot_size + self.retrieval.warm_budget_k);
        Ok(Retrieved { cands, hot_size, bound, scanned: scan.vectors_scanned, hits })
    }

    fn feedback(&self, r: &Retrieved, phases: &mut PhaseDurations) -> Result<(), EngineError> {
        let t0 = Instant::now();
        let selected: Vec<u64> = r.hits.iter().map(|h| h.0).collect();
        let mut s = self.store.write();
        let t = self.clock.now();
        let tiers_before = s.tier_sizes();
        let live_before = s.live_count();
        let pending = apply_feedback(&mut s, &selected, &r.cands, t, &self.params, &self.thresholds)
            .map_err(|e| EngineError::Store(e.to_string()))?;
        if s.live_count() < live_before {
            bump(&self.counters.request_path_evictions, (live_before - s.live_count()) as u64);
        } else if s.tier_sizes() != tiers_before {
            bump(&self.counters.request_path_tier_changes, 1);
        }
        self.flush_journal(&mut s);
        drop(s);
        for tr in pending {
            if self.pending.push(tr.item_id).is_err() {
                bump(&self.counters.queue_dropped, 1);
            }
        }
        phases.feedback = us(t0);
        Ok(())
    }

    fn check_request(&self, req: &QueryRequest) -> Result<usize, EngineError> {
        self.check_namespace(&req.namespace)?;
        let cap = self.retrieval.prompt_cap_n;
        match req.n {
            Some(0) => Err(EngineError::InvalidRequest("n must be at least 1".into())),
            Some(n) if n > cap => Err(EngineError::CapExceeded { requested: n, cap }),
            Some(n) => Ok(n),
            None => Ok(cap),
        }
    }

    fn fill_retrieval(&self, rec: &mut RequestRecord, r: &Retrieved) {
        if let Some(b) = r.bound {
            if r.cands.len() > b {
                bump(&self.counters.bound_violations, 1);
            }
        }
        if r.hits.len() > self.retrieval.prompt_cap_n {
            bump(&self.counters.cap_violations, 1);
        }
        rec.candidate_size = r.cands.len();
        rec.hot_size = r.hot_size;
        rec.warm_size = r.cands.warm_part.len();
        rec.bound = r.bound;
        rec.vectors_scanned = r.scanned;
        rec.injected_count = r.hits.len();
        rec.injected_ids = r.hits.iter().map(|h| h.0).collect();
        rec.injected_similarities = r.hits.iter().map(|h| h.1).collect();
        rec.injected_label_values = r.hits.iter().map(|h| h.3).collect();
    }

    pub fn recall(&self, req: &QueryRequest) -> Result<RecallOutcome, EngineError> {
        let _scope = RequestScope::enter();
        let started = Instant::now();
        let mut rec = self.base_record("recall", req.request_index, &req.namespace, self.clock.now());
        let res = (|| {
            let n = self.check_request(req)?;
            let mut phases = PhaseDurations::default();
            let r = self.retrieve(req, n, &mut phases)?;
            self.fill_retrieval(&mut rec, &r);
            self.feedback(&r, &mut phases)?;
            rec.phase_durations_us = phases;
            Ok(RecallOutcome {
                candidate_size: r.cands.len(),
                vectors_scanned: r.scanned,
                hits: r.hits.into_iter().map(|(id, similarity, content, _)| Hit { id, similarity, content }).collect(),
            })
        })();
        self.finish_record(rec, started, res.as_ref().err());
        res
    }

    pub fn ask(&self, req: &QueryRequest) -> Result<AskOutcome, EngineError> {
        let _scope = RequestScope::enter();
        let started = Instant::now();
        let mut rec = self.base_record("ask", req.request_index, &req.namespace, self.clock.now());
        let res = (|| {
            let n = self.check_request(req)?;
            let mut phases = PhaseDurations::default();
            let r = self.retrieve(req, n, &mut phases)?;
            self.fill_retrieval(&mut rec, &r);

            let t0 = Instant::now();
            let recent = self.conversation.lock().recent(&req.namespace);
            let injected = r.hits.iter().map(|h| (h.0, h.2.clone())).collect();
            let prompt = PromptContext::assemble(&self.cfg.prompt.system_prompt, recent, injected, &req.text);
            phases.assemble = us(t0);

            let t1 = Instant::now();
            let answer = mock_answer(&prompt, &req.text);
            let delay = self.cfg.prompt.synthetic_delay_us_per_token * prompt.token_count as f64;
            while delay > 0.0 && us(t1) < delay {
                std::hint::spin_loop();
            }
            phases.answer = us(t1);
            self.conversation.lock().push(&req.namespace, &req.text);

            self.feedback(&r, &mut phases)?;
            rec.token_count = prompt.token_count;
            rec.phase_durations_us = phases;
            Ok(AskOutcome {
                answer,
                citations: prompt.citations(),
                token_count: prompt.token_count,
                candidate_size: r.cands.len(),
                vectors_scanned: r.scanned,
            })
        })();
        self.finish_record(rec, started, res.as_ref().err());
        res
    }

    fn reconcile(&self, id: u64, t: f64, report: &mut SweepReport) {
        let mut s = self.store.write();
        match reconcile_item(&mut s, id, t, &self.params, &self.thresholds) {
            Ok(Some(r)) => report.absorb(&r),
            Ok(None) => {}
            Err(e) => {
                bump(&self.counters.errors, 1);
                eprintln!("reconcile {id}: {e}");
            }
        }
        self.flush_journal(&mut s);
    }

    /// Expires `id` if it is outside the TTL window. Returns whether it was live and expired.
    fn expire(&self, id: u64, t: f64) -> bool {
        let mut s = self.store.write();
        let due = matches!(s.get(id), Ok(it) if t - it.t_created >= self.ttl_window);
        let done = due && s.evict(id, EvictionRule::Expired).is_ok();
        self.flush_journal(&mut s);
        done
    }

    /// One maintenance pass at virtual time `t`: queued items first, then the
    /// next round-robin batch. Items are locked one at a time.
    pub fn sweep(&self, t: f64) -> LifecycleSnapshotRecord {
        if in_request_path() {
            bump(&self.counters.request_path_sweeps, 1);
        }
        let _one = self.sweep_lock.lock();
        let mut seen = BTreeSet::new();
        let mut queued = Vec::new();
        while let Some(id) = self.pending.pop() {
            if seen.insert(id) {
                queued.push(id);
            }
        }
        let mut report = SweepReport::default();
        let mut expired = 0usize;
        match self.policy {
            PolicyKind::Amvl => {
                let mut cursor = self.cursor.lock();
                for &id in &queued {
                    self.reconcile(id, t, &mut report);
                }
                let ids = sweep_batch_ids(&self.store.read(), *cursor, self.cfg.lifecycle.sweep_batch);
                for id in ids {
                    self.reconcile(id, t, &mut report);
                    cursor.last = id;
                }
                report.cursor = cursor.last;
            }
            PolicyKind::Ttl if self.ttl_window.is_finite() => {
                for &id in &queued {
                    expired += self.expire(id, t) as usize;
                }
                loop {
                    let front = self.store.read().ttl_queue().front().copied();
                    match front {
                        Some(id) if self.expire(id, t) => expired += 1,
                        _ => break,
                    }
                }
            }
            PolicyKind::Ttl | PolicyKind::Lru => {}
        }
        bump(&self.counters.sweeps, 1);
        bump(&self.counters.promoted, report.promoted as u64);
        bump(&self.counters.demoted, report.demoted as u64);
        bump(&self.counters.evicted, report.evicted as u64);
        bump(&self.counters.expired, expired as u64);
        let (tiers, stored) = {
            let s = self.store.read();
            (s.tier_sizes(), s.live_count())
        };
        let snap = LifecycleSnapshotRecord {
            ts_wall: wall_now(),
            t_virtual: t,
            policy: self.policy.as_str().into(),
            hot: tiers[0],
            warm: tiers[1],
            cold: tiers[2],
            stored,
            visited: report.visited,
            decayed: report.decayed,
            promoted: report.promoted,
            demoted: report.demoted,
            evicted: report.evicted,
            expired,
            cursor: report.cursor,
            queue_drained: queued.len(),
        };
        self.emit(Record::LifecycleSnapshot(snap.clone()));
        snap
    }

    pub fn summary(&self) -> RunSummaryRecord {
        let c = &self.counters;
        let s = self.store.read();
        RunSummaryRecord {
            ts_wall: wall_now(),
            policy: self.policy.as_str().into(),
            initial_items: self.initial_items,
            requests: get(&c.requests),
            errors: get(&c.errors),
            sweeps: get(&c.sweeps),
            promoted: get(&c.promoted),
            demoted: get(&c.demoted),
            evicted: get(&c.evicted),
            expired: get(&c.expired),
            queue_dropped: get(&c.queue_dropped),
            request_path_sweeps: get(&c.request_path_sweeps),
            request_path_tier_changes: get(&c.request_path_tier_changes),
            request_path_evictions: get(&c.request_path_evictions),
            bound_violations: get(&c.bound_violations),
            cap_violations: get(&c.cap_violations),
            final_stored: s.live_count(),
            final_tiers: s.tier_sizes(),
        }
    }

    pub fn stats(&self) -> EngineStats {
        let counters = self.summary();
        let s = self.store.read();
        let [hot, warm, cold] = s.tier_sizes();
        EngineStats {
            policy: self.policy.label().into(),
            stored: s.live_count(),
            total_written: s.total_count(),
            tiers: TierCounts { hot, warm, cold },
            counters,
        }
    }

    pub fn snapshot_to(&self, path: &std::path::Path) -> std::io::Result<()> {
        crate::persist::write_snapshot(&self.store.read(), path)
    }

    /// Emits the run summary, flushes the WAL and closes telemetry.
    pub fn finish(&self) -> anyhow::Result<RunSummaryRecord> {
        let summary = self.summary();
        self.emit(Record::RunSummary(summary.clone()));
        if let Some(w) = &self.wal {
            w.lock().flush()?;
        }
        if let Some(t) = &self.telemetry {
            t.close()?;
        }
        Ok(summary)
    }
}

fn us(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e6
}

#[cfg(test)]
mod tests {
    use super::*;
    use amvl_core::VirtualClock;

    fn engine(policy: PolicyKind) -> (Engine, Arc<VirtualClock>) {
        let clock = Arc::new(VirtualClock::new(0.0));
        let mut opts = EngineOptions::new(policy, clock.clone());
        opts.namespaces = Some(vec!["default".into(), "other".into()]);
        (Engine::new(&AppConfig::default(), opts).unwrap(), clock)
    }

    fn q(i: u64, text: &str) -> QueryRequest {
        QueryRequest { request_index: i, namespace: "default".into(), text: text.into(), n: None }
    }

    #[test]
    fn empty_store_recall_and_ask() {
        let (e, _) = engine(PolicyKind::Amvl);
        let r = e.recall(&q(0, "topic:1 anything")).unwrap();
        assert!(r.hits.is_empty());
        assert_eq!((r.candidate_size, r.vectors_scanned), (0, 0));
        let a = e.ask(&q(1, "topic:1 anything")).unwrap();
        assert!(a.citations.is_empty());
        assert!(a.answer.starts_with("No stored memories"), "{}", a.answer);
    }

    #[test]
    fn single_matching_item_is_first_hit() {
        let (e, clock) = engine(PolicyKind::Ttl);
        e.write(0, "default", "topic:3 note about flights", 0.9).unwrap();
        e.write(1, "default", "topic:30 garden", 0.1).unwrap();
        clock.advance_to(1.0);
        let r = e.recall(&q(2, "topic:3 when is my flight")).unwrap();
        assert_eq!(r.hits[0].id, 1);
        assert_eq!(r.candidate_size, 2);
    }

    #[test]
    fn request_errors() {
        let (e, _) = engine(PolicyKind::Amvl);
        assert_eq!(e.write(0, "default", "  ", 0.5), Err(EngineError::EmptyContent));
        assert!(matches!(e.write(0, "nope", "x", 0.5), Err(EngineError::UnknownNamespace(_))));
        let mut req = q(1, "x");
        req.n = Some(49);
        assert_eq!(e.recall(&req), Err(EngineError::CapExceeded { requested: 49, cap: 48 }));
    }

    #[test]
    fn namespaces_are_isolated() {
        let (e, _) = engine(PolicyKind::Ttl);
        e.write(0, "other", "topic:3 secret", 0.5).unwrap();
        assert!(e.recall(&q(1, "topic:3 secret")).unwrap().hits.is_empty());
    }

    #[test]
    fn sweep_inside_request_is_counted() {
        let (e, _) = engine(PolicyKind::Amvl);
        e.sweep(1.0);
        assert_eq!(e.summary().request_path_sweeps, 0);
        {
            let _s = RequestScope::enter();
            e.sweep(2.0);
        }
        assert_eq!(e.summary().request_path_sweeps, 1);
    }

    #[test]
    fn feedback_defers_tier_changes_to_sweep() {
        let (e, clock) = engine(PolicyKind::Amvl);
        for i in 0..3 {
            e.write(i, "default", &format!("topic:2 item {i}"), 0.9).unwrap();
        }
        assert_eq!(e.stats().tiers.warm, 3);
        for i in 3..6 {
            clock.advance_to(i as f64 * 0.1);
            e.recall(&q(i, "topic:2 item")).unwrap();
        }
        // 2.0 + 3 × (0.25 + 2) ≥ 5 but nothing moves until maintenance.
        assert_eq!(e.stats().tiers.hot, 0);
        let s = e.summary();
        assert_eq!((s.request_path_tier_changes, s.request_path_evictions), (0, 0));
        e.sweep(clock.now());
        assert_eq!(e.stats().tiers.hot, 3);
    }
}
