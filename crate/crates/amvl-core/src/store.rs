//! Item store with tier sets, optional TTL/LRU bookkeeping and a flat
//! vector index over live items.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{LifecycleThresholds, MemoryItem, Tier, ValueParams};
use crate::lifecycle::initial_tier;
use crate::vector::{FlatIndex, VectorError, NORM_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub enum StoreError {
    DimensionMismatch { expected: usize, got: usize },
    NotUnitNorm { norm: f64 },
    StorageFull { max_items: usize },
    NotFound(u64),
    Evicted(u64),
    /// Lifecycle eviction attempted on an item outside the cold tier.
    NotCold { id: u64, tier: Tier },
    /// Replayed mutation does not fit the current state.
    Replay(String),
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            StoreError::NotUnitNorm { norm } => write!(f, "embedding is not unit norm ({norm})"),
            StoreError::StorageFull { max_items } => write!(f, "store full ({max_items} items)"),
            StoreError::NotFound(id) => write!(f, "item {id} not found"),
            StoreError::Evicted(id) => write!(f, "item {id} is evicted"),
            StoreError::NotCold { id, tier } => write!(f, "item {id} is {tier}, not cold"),
            StoreError::Replay(m) => write!(f, "replay: {m}"),
        }
    }
}

impl From<VectorError> for StoreError {
    fn from(e: VectorError) -> Self {
        match e {
            VectorError::DimensionMismatch { expected, got } => StoreError::DimensionMismatch { expected, got },
            VectorError::NotUnitNorm { norm } => StoreError::NotUnitNorm { norm },
            VectorError::NotFound(id) => StoreError::NotFound(id),
            other => StoreError::Replay(alloc::format!("{other}")),
        }
    }
}

/// Why an item left the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvictionRule {
    /// Cold and below the eviction threshold.
    Lifecycle,
    /// Outside the TTL window.
    Expired,
    /// Displaced from an LRU store.
    Displaced,
}

/// Fields changed together by [`MemoryStore::update_item_atomic`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemDelta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_last: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_last_access: Option<f64>,
}

/// One store mutation, as recorded in the journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Mutation {
    Put {
        id: u64,
        namespace: String,
        content: String,
        embedding: Vec<f32>,
        label_value: f64,
        t: f64,
    },
    Update {
        id: u64,
        #[serde(flatten)]
        delta: ItemDelta,
    },
    Evict {
        id: u64,
        rule: EvictionRule,
    },
    Touch {
        id: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StoreOptions {
    pub max_items: Option<usize>,
    pub track_ttl: bool,
    pub track_lru: bool,
}

#[derive(Debug, Clone)]
pub struct MemoryStore {
    dim: usize,
    params: ValueParams,
    thresholds: LifecycleThresholds,
    options: StoreOptions,
    items: BTreeMap<u64, MemoryItem>,
    tiers: [BTreeSet<u64>; 3],
    next_id: u64,
    ttl_queue: VecDeque<u64>,
    lru_order: BTreeMap<u64, u64>,
    lru_seq: BTreeMap<u64, u64>,
    next_seq: u64,
    index: FlatIndex,
    journal: Option<Vec<Mutation>>,
}

impl MemoryStore {
    pub fn new(dim: usize, params: ValueParams, thresholds: LifecycleThresholds, options: StoreOptions) -> Self {
        MemoryStore {
            dim,
            params,
            thresholds,
            options,
            items: BTreeMap::new(),
            tiers: [BTreeSet::new(), BTreeSet::new(), BTreeSet::new()],
            next_id: 1,
            ttl_queue: VecDeque::new(),
            lru_order: BTreeMap::new(),
            lru_seq: BTreeMap::new(),
            next_seq: 0,
            index: FlatIndex::new(dim),
            journal: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ValueParams {
        &self.params
    }

    pub fn thresholds(&self) -> &LifecycleThresholds {
        &self.thresholds
    }

    pub fn options(&self) -> &StoreOptions {
        &self.options
    }

    pub fn index(&self) -> &FlatIndex {
        &self.index
    }

    /// Starts recording mutations; drain them with [`take_journal`](Self::take_journal).
    pub fn enable_journal(&mut self) {
        if self.journal.is_none() {
            self.journal = Some(Vec::new());
        }
    }

    pub fn take_journal(&mut self) -> Vec<Mutation> {
        match &mut self.journal {
            Some(j) => core::mem::take(j),
            None => Vec::new(),
        }
    }

    fn record(&mut self, m: impl FnOnce() -> Mutation) {
        if let Some(j) = &mut self.journal {
            j.push(m());
        }
    }

    pub fn put(
        &mut self,
        namespace: &str,
        content: &str,
        embedding: Vec<f32>,
        label_value: f64,
        t: f64,
    ) -> Result<u64, StoreError> {
        if embedding.len() != self.dim {
            return Err(StoreError::DimensionMismatch { expected: self.dim, got: embedding.len() });
        }
        let norm = crate::vector::norm(&embedding);
        if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(StoreError::NotUnitNorm { norm });
        }
        if let Some(max) = self.options.max_items {
            if self.live_count() >= max {
                return Err(StoreError::StorageFull { max_items: max });
            }
        }
        let id = self.next_id;
        self.index.index_vector(id, &embedding)?;
        self.next_id += 1;
        let tier = initial_tier(self.params.v_init, &self.thresholds);
        self.record(|| Mutation::Put {
            id,
            namespace: namespace.into(),
            content: content.into(),
            embedding: embedding.clone(),
            label_value,
            t,
        });
        self.items.insert(
            id,
            MemoryItem {
                id,
                namespace: namespace.into(),
                content: content.into(),
                embedding,
                value: self.params.v_init,
                t_last: t,
                t_created: t,
                t_last_access: None,
                tier,
                label_value,
                evicted: false,
            },
        );
        self.tiers[tier.index()].insert(id);
        if self.options.track_ttl {
            self.ttl_queue.push_back(id);
        }
        if self.options.track_lru {
            self.bump_lru(id);
        }
        Ok(id)
    }

    fn bump_lru(&mut self, id: u64) {
        if let Some(old) = self.lru_seq.insert(id, self.next_seq) {
            self.lru_order.remove(&old);
        }
        self.lru_order.insert(self.next_seq, id);
        self.next_seq += 1;
    }

    /// Live item lookup.
    pub fn get(&self, id: u64) -> Result<&MemoryItem, StoreError> {
        match self.items.get(&id) {
            None => Err(StoreError::NotFound(id)),
            Some(it) if it.evicted => Err(StoreError::Evicted(id)),
            Some(it) => Ok(it),
        }
    }

    /// Lookup that also returns tombstones.
    pub fn get_any(&self, id: u64) -> Option<&MemoryItem> {
        self.items.get(&id)
    }

    /// Applies every field of `delta` in one step, moving the id between
    /// tier sets if the tier changes.
    pub fn update_item_atomic(&mut self, id: u64, delta: ItemDelta) -> Result<&MemoryItem, StoreError> {
        let it = match self.items.get_mut(&id) {
            None => return Err(StoreError::NotFound(id)),
            Some(it) if it.evicted => return Err(StoreError::Evicted(id)),
            Some(it) => it,
        };
        if let Some(v) = delta.value {
            it.value = v;
        }
        if let Some(t) = delta.t_last {
            it.t_last = t;
        }
        if let Some(t) = delta.t_last_access {
            it.t_last_access = Some(t);
        }
        if let Some(tier) = delta.tier {
            if tier != it.tier {
                self.tiers[it.tier.index()].remove(&id);
                self.tiers[tier.index()].insert(id);
                it.tier = tier;
            }
        }
        self.record(|| Mutation::Update { id, delta });
        Ok(&self.items[&id])
    }

    /// Marks a recent use for LRU ordering and sets `t_last_access`.
    pub fn touch(&mut self, id: u64, t: f64) -> Result<(), StoreError> {
        self.update_item_atomic(id, ItemDelta { t_last_access: Some(t), ..ItemDelta::default() })?;
        if self.options.track_lru {
            self.bump_lru(id);
        }
        self.record(|| Mutation::Touch { id });
        Ok(())
    }

    /// Tombstones an item and drops it from every index. Content stays
    /// readable through [`get_any`](Self::get_any).
    pub fn evict(&mut self, id: u64, rule: EvictionRule) -> Result<(), StoreError> {
        let it = match self.items.get_mut(&id) {
            None => return Err(StoreError::NotFound(id)),
            Some(it) if it.evicted => return Err(StoreError::Evicted(id)),
            Some(it) => it,
        };
        if rule == EvictionRule::Lifecycle && it.tier != Tier::Cold {
            return Err(StoreError::NotCold { id, tier: it.tier });
        }
        it.evicted = true;
        let tier = it.tier;
        self.tiers[tier.index()].remove(&id);
        self.index.remove_vector(id)?;
        if let Some(seq) = self.lru_seq.remove(&id) {
            self.lru_order.remove(&seq);
        }
        if self.options.track_ttl {
            if self.ttl_queue.front() == Some(&id) {
                self.ttl_queue.pop_front();
            } else if let Some(pos) = self.ttl_queue.iter().position(|x| *x == id) {
                self.ttl_queue.remove(pos);
            }
        }
        self.record(|| Mutation::Evict { id, rule });
        Ok(())
    }

    /// Re-applies a journal record. Puts must arrive in id order.
    pub fn apply_mutation(&mut self, m: &Mutation) -> Result<(), StoreError> {
        match m {
            Mutation::Put { id, namespace, content, embedding, label_value, t } => {
                if *id != self.next_id {
                    return Err(StoreError::Replay(alloc::format!("put id {id}, expected {}", self.next_id)));
                }
                self.put(namespace, content, embedding.clone(), *label_value, *t)?;
            }
            Mutation::Update { id, delta } => {
                self.update_item_atomic(*id, *delta)?;
            }
            Mutation::Evict { id, rule } => self.evict(*id, *rule)?,
            Mutation::Touch { id } => {
                if self.options.track_lru {
                    self.get(*id)?;
                    self.bump_lru(*id);
                    self.record(|| Mutation::Touch { id: *id });
                }
            }
        }
        Ok(())
    }

    pub fn tier_set(&self, tier: Tier) -> &BTreeSet<u64> {
        &self.tiers[tier.index()]
    }

    /// `[hot, warm, cold]` sizes.
    pub fn tier_sizes(&self) -> [usize; 3] {
        [self.tiers[0].len(), self.tiers[1].len(), self.tiers[2].len()]
    }

    pub fn live_count(&self) -> usize {
        self.index.len()
    }

    /// Items ever written, including tombstones.
    pub fn total_count(&self) -> usize {
        self.items.len()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Live ids in ascending order.
    pub fn live_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.items.values().filter(|it| !it.evicted).map(|it| it.id)
    }

    /// All records, tombstones included, in id order.
    pub fn items(&self) -> impl Iterator<Item = &MemoryItem> + '_ {
        self.items.values()
    }

    /// First live id strictly greater than `after`, wrapping to the start.
    pub fn next_live_after(&self, after: u64) -> Option<u64> {
        let above = self.tiers.iter().filter_map(|s| s.range(after + 1..).next().copied()).min();
        above.or_else(|| self.tiers.iter().filter_map(|s| s.first().copied()).min())
    }

    /// Live ids in creation order (TTL tracking only).
    pub fn ttl_queue(&self) -> &VecDeque<u64> {
        &self.ttl_queue
    }

    /// Up to `capacity` ids, most recently used first (LRU tracking only).
    pub fn lru_most_recent(&self, capacity: usize) -> Vec<u64> {
        self.lru_order.values().rev().take(capacity).copied().collect()
    }

    pub fn lru_len(&self) -> usize {
        self.lru_order.len()
    }

    /// Every structural invariant: tier sets partition the live ids and agree
    /// with each item's tier, and the index holds exactly the live ids.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut live = 0usize;
        for it in self.items.values() {
            let member: Vec<Tier> = Tier::ALL.iter().copied().filter(|t| self.tiers[t.index()].contains(&it.id)).collect();
            if it.evicted {
                if !member.is_empty() || self.index.contains(it.id) {
                    return Err(alloc::format!("evicted item {} still indexed", it.id));
                }
                continue;
            }
            live += 1;
            if member.as_slice() != [it.tier] {
                return Err(alloc::format!("item {} tier {:?} but member of {:?}", it.id, it.tier, member));
            }
            if !self.index.contains(it.id) {
                return Err(alloc::format!("live item {} missing from index", it.id));
            }
        }
        let sum: usize = self.tier_sizes().iter().sum();
        if sum != live || self.index.len() != live {
            return Err(alloc::format!("tier sizes {sum}, index {}, live {live}", self.index.len()));
        }
        if self.options.track_lru && self.lru_order.len() != live {
            return Err(alloc::format!("lru tracks {} of {live}", self.lru_order.len()));
        }
        if self.options.track_ttl && self.ttl_queue.len() != live {
            return Err(alloc::format!("ttl queue tracks {} of {live}", self.ttl_queue.len()));
        }
        Ok(())
    }

    /// Rebuilds a store from raw records (used by snapshot restore).
    pub(crate) fn from_parts(
        dim: usize,
        params: ValueParams,
        thresholds: LifecycleThresholds,
        options: StoreOptions,
        next_id: u64,
        next_seq: u64,
        items: Vec<MemoryItem>,
        lru: Vec<(u64, u64)>,
    ) -> Result<Self, StoreError> {
        let mut s = MemoryStore::new(dim, params, thresholds, options);
        s.next_id = next_id;
        s.next_seq = next_seq;
        for it in items {
            if !it.evicted {
                s.index.index_vector(it.id, &it.embedding)?;
                s.tiers[it.tier.index()].insert(it.id);
                if options.track_ttl {
                    s.ttl_queue.push_back(it.id);
                }
            }
            s.items.insert(it.id, it);
        }
        for (id, seq) in lru {
            s.lru_seq.insert(id, seq);
            s.lru_order.insert(seq, id);
        }
        Ok(s)
    }

    /// `(id, seq)` pairs of the LRU order.
    pub(crate) fn lru_pairs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.lru_seq.iter().map(|(a, b)| (*a, *b))
    }

    pub(crate) fn next_seq(&self) -> u64 {
        self.next_seq
    }
}
