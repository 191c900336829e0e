//! Tier mapping with hysteresis, usage application and maintenance sweeps.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{LifecycleThresholds, Tier, ValueParams};
use crate::store::{EvictionRule, ItemDelta, MemoryStore, StoreError};
use crate::value::{decay_only, updated_value, UsageEvent, ValueError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionCause {
    Promotion,
    Demotion,
    Eviction,
}

/// One tier step (or an eviction out of Cold, where `to_tier` is `None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierTransition {
    pub item_id: u64,
    pub from_tier: Tier,
    pub to_tier: Option<Tier>,
    pub value_at_transition: f64,
    pub t: f64,
    pub cause: TransitionCause,
}

impl TierTransition {
    /// True for Hot↔Warm, Warm↔Cold and Cold→evicted.
    pub fn is_one_step(&self) -> bool {
        match (self.from_tier, self.to_tier) {
            (Tier::Hot, Some(Tier::Warm)) | (Tier::Warm, Some(Tier::Hot)) => true,
            (Tier::Warm, Some(Tier::Cold)) | (Tier::Cold, Some(Tier::Warm)) => true,
            (Tier::Cold, None) => self.cause == TransitionCause::Eviction,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LifecycleError {
    Store(StoreError),
    Value(ValueError),
}

impl fmt::Display for LifecycleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LifecycleError::Store(e) => e.fmt(f),
            LifecycleError::Value(e) => e.fmt(f),
        }
    }
}

impl From<StoreError> for LifecycleError {
    fn from(e: StoreError) -> Self {
        LifecycleError::Store(e)
    }
}

impl From<ValueError> for LifecycleError {
    fn from(e: ValueError) -> Self {
        LifecycleError::Value(e)
    }
}

/// One hysteresis step from `current` given value `v`.
pub fn next_tier(current: Tier, v: f64, th: &LifecycleThresholds) -> Tier {
    match current {
        Tier::Hot if v < th.theta_h_down => Tier::Warm,
        Tier::Warm if v >= th.theta_h_up => Tier::Hot,
        Tier::Warm if v < th.theta_w_down => Tier::Cold,
        Tier::Cold if v >= th.theta_w_up => Tier::Warm,
        t => t,
    }
}

/// Tier of a freshly written item: plain up-threshold comparison.
pub fn initial_tier(v: f64, th: &LifecycleThresholds) -> Tier {
    if v >= th.theta_h_up {
        Tier::Hot
    } else if v >= th.theta_w_up {
        Tier::Warm
    } else {
        Tier::Cold
    }
}

fn cause(from: Tier, to: Tier) -> TransitionCause {
    if to < from {
        TransitionCause::Promotion
    } else {
        TransitionCause::Demotion
    }
}

/// Applies a usage event to the item's value and timestamps. The tier is left
/// alone; a pending one-step transition is returned for later application.
pub fn apply_usage(
    store: &mut MemoryStore,
    event: &UsageEvent,
    params: &ValueParams,
    th: &LifecycleThresholds,
) -> Result<Option<TierTransition>, LifecycleError> {
    let it = store.get(event.item_id)?;
    let (v, t_last) = updated_value(it.value, it.t_last, event, params)?;
    let delta = ItemDelta {
        value: Some(v),
        t_last: Some(t_last),
        t_last_access: event.i_access.then_some(event.t_now),
        tier: None,
    };
    let it = store.update_item_atomic(event.item_id, delta)?;
    let to = next_tier(it.tier, v, th);
    Ok((to != it.tier).then(|| TierTransition {
        item_id: it.id,
        from_tier: it.tier,
        to_tier: Some(to),
        value_at_transition: v,
        t: event.t_now,
        cause: cause(it.tier, to),
    }))
}

/// What happened to one item during reconciliation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconciled {
    pub decayed: bool,
    pub transitions: Vec<TierTransition>,
}

/// Brings one item up to date at `t_now`: lazy decay, hysteresis steps until
/// a fixed point, and eviction if it ends Cold below `theta_e`. Returns
/// `None` for missing or evicted ids. If the item was touched after `t_now`, no decay
/// is applied and its current value is used.
pub fn reconcile_item(
    store: &mut MemoryStore,
    id: u64,
    t_now: f64,
    params: &ValueParams,
    th: &LifecycleThresholds,
) -> Result<Option<Reconciled>, LifecycleError> {
    let mut out = Reconciled::default();
    let Ok(it) = store.get(id) else { return Ok(None) };
    let (mut v, mut tier) = (it.value, it.tier);
    let t = if t_now >= it.t_last {
        let nv = decay_only(v, it.t_last, t_now, params.lambda)?;
        out.decayed = nv != v || it.t_last != t_now;
        v = nv;
        t_now
    } else {
        it.t_last
    };
    loop {
        let next = next_tier(tier, v, th);
        if next == tier {
            break;
        }
        out.transitions.push(TierTransition {
            item_id: id,
            from_tier: tier,
            to_tier: Some(next),
            value_at_transition: v,
            t,
            cause: cause(tier, next),
        });
        tier = next;
    }
    if out.decayed || !out.transitions.is_empty() {
        store.update_item_atomic(id, ItemDelta { value: Some(v), t_last: Some(t), tier: Some(tier), t_last_access: None })?;
    }
    if tier == Tier::Cold && v < th.theta_e {
        store.evict(id, EvictionRule::Lifecycle)?;
        out.transitions.push(TierTransition {
            item_id: id,
            from_tier: Tier::Cold,
            to_tier: None,
            value_at_transition: v,
            t,
            cause: TransitionCause::Eviction,
        });
    }
    Ok(Some(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub visited: usize,
    pub decayed: usize,
    pub promoted: usize,
    pub demoted: usize,
    pub evicted: usize,
    /// Last id visited by the round-robin batch.
    pub cursor: u64,
}

impl SweepReport {
    pub fn absorb(&mut self, r: &Reconciled) {
        self.visited += 1;
        self.decayed += r.decayed as usize;
        for t in &r.transitions {
            match t.cause {
                TransitionCause::Promotion => self.promoted += 1,
                TransitionCause::Demotion => self.demoted += 1,
                TransitionCause::Eviction => self.evicted += 1,
            }
        }
    }
}

/// Round-robin position of the maintenance sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepCursor {
    pub last: u64,
}

/// Ids the next batch will visit: up to `batch` live ids after the cursor,
/// wrapping once, each at most once.
pub fn sweep_batch_ids(store: &MemoryStore, cursor: SweepCursor, batch: usize) -> Vec<u64> {
    let n = batch.min(store.live_count());
    let mut ids = Vec::with_capacity(n);
    let mut at = cursor.last;
    while ids.len() < n {
        match store.next_live_after(at) {
            Some(id) if ids.first() != Some(&id) => {
                ids.push(id);
                at = id;
            }
            _ => break,
        }
    }
    ids
}

/// Single-threaded sweep: reconciles the `queued` ids first, then the next
/// round-robin batch. Transitions are appended to `log`.
#[allow(clippy::too_many_arguments)]
pub fn maintenance_sweep(
    store: &mut MemoryStore,
    cursor: &mut SweepCursor,
    t_now: f64,
    params: &ValueParams,
    th: &LifecycleThresholds,
    batch: usize,
    queued: &[u64],
    log: &mut Vec<TierTransition>,
) -> Result<SweepReport, LifecycleError> {
    let mut report = SweepReport::default();
    for &id in queued {
        if let Some(r) = reconcile_item(store, id, t_now, params, th)? {
            report.absorb(&r);
            log.extend_from_slice(&r.transitions);
        }
    }
    let ids = sweep_batch_ids(store, *cursor, batch);
    for id in ids {
        if let Some(r) = reconcile_item(store, id, t_now, params, th)? {
            report.absorb(&r);
            log.extend_from_slice(&r.transitions);
        }
        cursor.last = id;
    }
    report.cursor = cursor.last;
    Ok(report)
}
