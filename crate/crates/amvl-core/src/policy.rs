//! Per-request eligibility: AMV-L (hot tier plus a warm sample), TTL (every
//! unexpired item) and LRU (the C most recently used items).

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{LifecycleThresholds, RetrievalConfig, Tier, ValueParams, WarmMode};
use crate::lifecycle::{apply_usage, LifecycleError, TierTransition};
use crate::store::{MemoryStore, StoreError};
use crate::value::UsageEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Ttl,
    Lru,
    Amvl,
}

impl PolicyKind {
    /// Run order of the three-way comparison.
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Ttl, PolicyKind::Lru, PolicyKind::Amvl];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Ttl => "ttl",
            PolicyKind::Lru => "lru",
            PolicyKind::Amvl => "amvl",
        }
    }

    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Ttl => "TTL",
            PolicyKind::Lru => "LRU",
            PolicyKind::Amvl => "AMV-L",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPolicy(pub alloc::string::String);

impl fmt::Display for UnknownPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown policy '{}' (expected ttl, lru or amvl)", self.0)
    }
}

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ttl" => Ok(PolicyKind::Ttl),
            "lru" => Ok(PolicyKind::Lru),
            "amvl" | "amv-l" => Ok(PolicyKind::Amvl),
            _ => Err(UnknownPolicy(s.into())),
        }
    }
}

/// The retrieval-eligible set R for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Ascending, distinct.
    pub ids: Vec<u64>,
    pub hot_part: Vec<u64>,
    pub warm_part: Vec<u64>,
    pub policy: PolicyKind,
    pub built_at: f64,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.binary_search(&id).is_ok()
    }
}

/// Per-request sampling stream derived from `(run_seed, request_index)`.
pub fn request_rng(run_seed: u64, request_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(request_index);
    rng
}

/// `R = T_H ∪ Sample_k(T_W)`.
pub fn build_candidates_amvl(
    store: &MemoryStore,
    cfg: &RetrievalConfig,
    rng: &mut ChaCha8Rng,
    t_now: f64,
) -> CandidateSet {
    let hot: Vec<u64> = store.tier_set(Tier::Hot).iter().copied().collect();
    let warm_set = store.tier_set(Tier::Warm);
    let k = cfg.warm_budget_k.min(warm_set.len());
    let mut warm: Vec<u64> = match cfg.warm_mode {
        _ if k == 0 => Vec::new(),
        WarmMode::Random => {
            let pool: Vec<u64> = warm_set.iter().copied().collect();
            index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
        }
        WarmMode::Recency => {
            let mut pool: Vec<(f64, u64)> = warm_set
                .iter()
                .filter_map(|&id| store.get(id).ok().map(|it| (it.recency(), id)))
                .collect();
            let by_recency = |a: &(f64, u64), b: &(f64, u64)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if k < pool.len() {
                pool.select_nth_unstable_by(k - 1, by_recency);
                pool.truncate(k);
            }
            pool.sort_by(by_recency);
            pool.into_iter().map(|(_, id)| id).collect()
        }
    };
    warm.sort_unstable();
    let mut ids = Vec::with_capacity(hot.len() + warm.len());
    ids.extend_from_slice(&hot);
    ids.extend_from_slice(&warm);
    ids.sort_unstable();
    CandidateSet { ids, hot_part: hot, warm_part: warm, policy: PolicyKind::Amvl, built_at: t_now }
}

/// Every live item with `t_now − t_created < window`. Expired ids are
/// returned separately so the caller can hand them to maintenance.
pub fn build_candidates_ttl(store: &MemoryStore, window: f64, t_now: f64) -> (CandidateSet, Vec<u64>) {
    let mut ids = Vec::new();
    let mut expired = Vec::new();
    let queue = store.ttl_queue();
    let source: Vec<u64> = if queue.len() == store.live_count() {
        queue.iter().copied().collect()
    } else {
        store.live_ids().collect()
    };
    for id in source {
        let Ok(it) = store.get(id) else { continue };
        if t_now - it.t_created < window {
            ids.push(id);
        } else {
            expired.push(id);
        }
    }
    ids.sort_unstable();
    let set = CandidateSet { ids, hot_part: Vec::new(), warm_part: Vec::new(), policy: PolicyKind::Ttl, built_at: t_now };
    (set, expired)
}

/// The `capacity` most recently used items.
pub fn build_candidates_lru(store: &MemoryStore, capacity: usize, t_now: f64) -> CandidateSet {
    let mut ids = store.lru_most_recent(capacity);
    ids.sort_unstable();
    CandidateSet { ids, hot_part: Vec::new(), warm_part: Vec::new(), policy: PolicyKind::Lru, built_at: t_now }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackError {
    OutsideCandidates(u64),
    Lifecycle(LifecycleError),
}

impl fmt::Display for FeedbackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackError::OutsideCandidates(id) => write!(f, "feedback for id {id} outside the candidate set"),
            FeedbackError::Lifecycle(e) => e.fmt(f),
        }
    }
}

impl From<LifecycleError> for FeedbackError {
    fn from(e: LifecycleError) -> Self {
        FeedbackError::Lifecycle(e)
    }
}

impl From<StoreError> for FeedbackError {
    fn from(e: StoreError) -> Self {
        FeedbackError::Lifecycle(LifecycleError::Store(e))
    }
}

/// Fails with the first id of `selected` missing from `candidates`.
pub fn check_feedback(selected: &[u64], candidates: &CandidateSet) -> Result<(), FeedbackError> {
    match selected.iter().find(|id| !candidates.contains(**id)) {
        Some(id) => Err(FeedbackError::OutsideCandidates(*id)),
        None => Ok(()),
    }
}

/// Request-path feedback. AMV-L: access + contribution for `selected`,
/// access only for the rest of R. LRU: refreshes `selected` in order. TTL:
/// nothing. Returns pending tier transitions (AMV-L only); tiers themselves
/// are not changed here.
pub fn apply_feedback(
    store: &mut MemoryStore,
    selected: &[u64],
    candidates: &CandidateSet,
    t_now: f64,
    params: &ValueParams,
    th: &LifecycleThresholds,
) -> Result<Vec<TierTransition>, FeedbackError> {
    check_feedback(selected, candidates)?;
    let mut pending = Vec::new();
    match candidates.policy {
        PolicyKind::Ttl => {}
        PolicyKind::Lru => {
            for &id in selected {
                store.touch(id, t_now)?;
            }
        }
        PolicyKind::Amvl => {
            let s: BTreeSet<u64> = selected.iter().copied().collect();
            for &id in &candidates.ids {
                let ev = if s.contains(&id) {
                    UsageEvent::contribution(id, t_now)
                } else {
                    UsageEvent::access(id, t_now)
                };
                match apply_usage(store, &ev, params, th) {
                    Ok(Some(t)) => pending.push(t),
                    Ok(None) => {}
                    // Evicted between build and feedback: nothing to reinforce.
                    Err(LifecycleError::Store(StoreError::Evicted(_))) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(pending)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ItemDelta, StoreOptions};
    use alloc::vec;

    fn unit(i: usize) -> Vec<f32> {
        let mut v = vec![0.0; 4];
        v[i % 4] = 1.0;
        v
    }

    fn amvl_store(n_hot: usize, n_warm: usize) -> MemoryStore {
        let mut s = MemoryStore::new(4, ValueParams::default(), LifecycleThresholds::default(), StoreOptions::default());
        for i in 0..n_hot + n_warm {
            let id = s.put("ns", "x", unit(i), 0.0, i as f64).unwrap();
            let tier = if i < n_hot { Tier::Hot } else { Tier::Warm };
            s.update_item_atomic(id, ItemDelta { tier: Some(tier), ..Default::default() }).unwrap();
        }
        s
    }

    fn cfg(k: usize, mode: WarmMode) -> RetrievalConfig {
        RetrievalConfig { warm_budget_k: k, warm_mode: mode, ..RetrievalConfig::default() }
    }

    #[test]
    fn amvl_bound_with_empty_hot() {
        let s = amvl_store(0, 10);
        let r = build_candidates_amvl(&s, &cfg(3, WarmMode::Random), &mut request_rng(1, 0), 0.0);
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn amvl_warm_exhausted() {
        let s = amvl_store(100, 5);
        let r = build_candidates_amvl(&s, &cfg(32, WarmMode::Random), &mut request_rng(1, 0), 0.0);
        assert_eq!(r.len(), 105);
        assert_eq!(r.hot_part.len(), 100);
    }

    #[test]
    fn recency_mode_takes_most_recent() {
        let mut s = amvl_store(0, 3);
        for (id, t) in [(1, 10.0), (2, 20.0), (3, 30.0)] {
            s.update_item_atomic(id, ItemDelta { t_last_access: Some(t), ..Default::default() }).unwrap();
        }
        let r = build_candidates_amvl(&s, &cfg(2, WarmMode::Recency), &mut request_rng(1, 0), 40.0);
        assert_eq!(r.warm_part, vec![2, 3]);
    }

    #[test]
    fn random_mode_is_seeded() {
        let s = amvl_store(3, 50);
        let a = build_candidates_amvl(&s, &cfg(8, WarmMode::Random), &mut request_rng(7, 42), 0.0);
        let b = build_candidates_amvl(&s, &cfg(8, WarmMode::Random), &mut request_rng(7, 42), 0.0);
        let c = build_candidates_amvl(&s, &cfg(8, WarmMode::Random), &mut request_rng(7, 43), 0.0);
        assert_eq!(a, b);
        assert_ne!(a.warm_part, c.warm_part);
    }

    #[test]
    fn ttl_window() {
        let opts = StoreOptions { track_ttl: true, ..Default::default() };
        let mut s = MemoryStore::new(4, ValueParams::default(), LifecycleThresholds::default(), opts);
        for i in 0..3 {
            s.put("ns", "x", unit(i), 0.0, 0.0).unwrap();
        }
        let (r, exp) = build_candidates_ttl(&s, 100.0, 50.0);
        assert_eq!((r.len(), exp.len()), (3, 0));
        let (r, exp) = build_candidates_ttl(&s, 100.0, 150.0);
        assert_eq!((r.len(), exp.len()), (0, 3));
    }

    #[test]
    fn lru_textbook() {
        let opts = StoreOptions { track_lru: true, ..Default::default() };
        let mut s = MemoryStore::new(4, ValueParams::default(), LifecycleThresholds::default(), opts);
        let a = s.put("ns", "a", unit(0), 0.0, 0.0).unwrap();
        let b = s.put("ns", "b", unit(1), 0.0, 1.0).unwrap();
        let c = s.put("ns", "c", unit(2), 0.0, 2.0).unwrap();
        assert_eq!(build_candidates_lru(&s, 2, 3.0).ids, vec![b, c]);
        s.touch(a, 3.0).unwrap();
        assert_eq!(build_candidates_lru(&s, 2, 3.0).ids, vec![a, c]);
    }

    #[test]
    fn amvl_feedback_rewards() {
        let p = ValueParams { alpha: 1.0, beta: 2.0, lambda: 0.01, v_max: 100.0, v_init: 2.0 };
        let th = LifecycleThresholds::default();
        let mut s = MemoryStore::new(4, p, th, StoreOptions::default());
        let a = s.put("ns", "a", unit(0), 0.0, 0.0).unwrap();
        let b = s.put("ns", "b", unit(1), 0.0, 0.0).unwrap();
        let r = CandidateSet { ids: vec![a, b], hot_part: vec![], warm_part: vec![a, b], policy: PolicyKind::Amvl, built_at: 0.0 };
        apply_feedback(&mut s, &[a], &r, 0.0, &p, &th).unwrap();
        assert_eq!(s.get(a).unwrap().value, 5.0);
        assert_eq!(s.get(b).unwrap().value, 3.0);
        assert_eq!(
            apply_feedback(&mut s, &[99], &r, 0.0, &p, &th),
            Err(FeedbackError::OutsideCandidates(99))
        );
    }

    #[test]
    fn ttl_feedback_is_noop() {
        let p = ValueParams::default();
        let th = LifecycleThresholds::default();
        let mut s = MemoryStore::new(4, p, th, StoreOptions::default());
        let a = s.put("ns", "a", unit(0), 0.0, 0.0).unwrap();
        let r = CandidateSet { ids: vec![a], hot_part: vec![], warm_part: vec![], policy: PolicyKind::Ttl, built_at: 0.0 };
        apply_feedback(&mut s, &[a], &r, 5.0, &p, &th).unwrap();
        let it = s.get(a).unwrap();
        assert_eq!((it.value, it.t_last, it.t_last_access), (p.v_init, 0.0, None));
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!("AMVL".parse::<PolicyKind>().unwrap(), PolicyKind::Amvl);
        assert_eq!("ttl".parse::<PolicyKind>().unwrap(), PolicyKind::Ttl);
        assert!("fifo".parse::<PolicyKind>().is_err());
    }
}
