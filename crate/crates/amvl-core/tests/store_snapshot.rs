use amvl_core::snapshot::{self, SnapshotError};
use amvl_core::store::{EvictionRule, ItemDelta, StoreOptions};
use amvl_core::{LifecycleThresholds, MemoryItem, MemoryStore, StoreError, Tier, ValueParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(dim: usize, i: u64) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[(i as usize) % dim] = 0.6;
    v[(i as usize + 1) % dim] = 0.8;
    v
}

fn store(opts: StoreOptions) -> MemoryStore {
    MemoryStore::new(16, ValueParams::default(), LifecycleThresholds::default(), opts)
}

fn assert_same_items(a: &MemoryStore, b: &MemoryStore) {
    let xs: Vec<&MemoryItem> = a.items().collect();
    let ys: Vec<&MemoryItem> = b.items().collect();
    assert_eq!(xs.len(), ys.len());
    for (x, y) in xs.iter().zip(&ys) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.namespace, y.namespace);
        assert_eq!(x.content, y.content);
        assert_eq!(x.embedding, y.embedding, "embedding of {}", x.id);
        assert_eq!(x.value.to_bits(), y.value.to_bits(), "value of {}", x.id);
        assert_eq!(x.t_last.to_bits(), y.t_last.to_bits());
        assert_eq!(x.t_created.to_bits(), y.t_created.to_bits());
        assert_eq!(x.t_last_access.map(f64::to_bits), y.t_last_access.map(f64::to_bits));
        assert_eq!(x.tier, y.tier);
        assert_eq!(x.label_value.to_bits(), y.label_value.to_bits());
        assert_eq!(x.evicted, y.evicted);
    }
    for t in Tier::ALL {
        assert_eq!(a.tier_set(t), b.tier_set(t));
    }
    assert_eq!(a.next_id(), b.next_id());
}

#[test]
fn empty_round_trip() {
    let s = store(StoreOptions::default());
    let r = snapshot::decode(&snapshot::encode(&s)).unwrap();
    assert_eq!(r.total_count(), 0);
    assert_eq!(snapshot::encode(&r), snapshot::encode(&s));
}

#[test]
fn ten_thousand_items_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = StoreOptions { track_lru: true, track_ttl: true, ..Default::default() };
    let mut s = store(opts);
    for i in 0..10_000u64 {
        let id = s.put(&format!("ns{}", i % 3), &format!("item {i}"), unit(16, i), rng.random(), i as f64).unwrap();
        match rng.random_range(0..5) {
            0 => s.touch(id, i as f64 + 0.5).unwrap(),
            1 => {
                let tier = [Tier::Hot, Tier::Warm, Tier::Cold][rng.random_range(0..3)];
                let delta = ItemDelta { value: Some(rng.random_range(0.0..10.0)), tier: Some(tier), ..Default::default() };
                s.update_item_atomic(id, delta).unwrap();
            }
            2 if id > 10 => {
                let _ = s.evict(id - 10, EvictionRule::Expired);
            }
            _ => {}
        }
    }
    let r = snapshot::decode(&snapshot::encode(&s)).unwrap();
    assert_same_items(&s, &r);
    assert_eq!(r.lru_most_recent(500), s.lru_most_recent(500));
    assert_eq!(r.ttl_queue(), s.ttl_queue());
    assert_eq!(snapshot::encode(&r), snapshot::encode(&s));
    r.check_invariants().unwrap();
}

#[test]
fn truncated_or_flipped_bytes_are_rejected() {
    let mut s = store(StoreOptions::default());
    for i in 0..10 {
        s.put("ns", "x", unit(16, i), 0.5, i as f64).unwrap();
    }
    let bytes = snapshot::encode(&s);
    for cut in [0, 4, bytes.len() / 2, bytes.len() - 1] {
        assert!(snapshot::decode(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 0x40;
    assert!(matches!(snapshot::decode(&flipped), Err(SnapshotError::Corrupt(_))));
}

#[test]
fn evicted_items_are_not_retrievable() {
    let mut s = store(StoreOptions::default());
    let id = s.put("ns", "x", unit(16, 0), 0.5, 0.0).unwrap();
    s.evict(id, EvictionRule::Lifecycle).unwrap_err();
    s.update_item_atomic(id, ItemDelta { tier: Some(Tier::Cold), value: Some(0.0), ..Default::default() }).unwrap();
    s.evict(id, EvictionRule::Lifecycle).unwrap();
    assert_eq!(s.get(id), Err(StoreError::Evicted(id)));
    assert!(!s.index().contains(id));
    assert!(s.get_any(id).is_some_and(|it| it.evicted));
}

#[derive(Debug, Clone)]
enum Op {
    Put,
    Touch(usize),
    Update(usize, f64, u8),
    Evict(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => Just(Op::Put),
        2 => any::<usize>().prop_map(Op::Touch),
        2 => (any::<usize>(), 0.0..10.0f64, 0..3u8).prop_map(|(i, v, t)| Op::Update(i, v, t)),
        1 => any::<usize>().prop_map(Op::Evict),
    ]
}

proptest! {
    #[test]
    fn partition_invariant_and_monotone_ids(ops in prop::collection::vec(op(), 1..300)) {
        let opts = StoreOptions { track_lru: true, track_ttl: true, ..Default::default() };
        let mut s = store(opts);
        let mut ids: Vec<u64> = Vec::new();
        let mut t = 0.0;
        for op in ops {
            t += 1.0;
            match op {
                Op::Put => {
                    let id = s.put("ns", "x", unit(16, ids.len() as u64), 0.3, t).unwrap();
                    prop_assert!(ids.last().is_none_or(|l| id > *l));
                    ids.push(id);
                }
                Op::Touch(i) if !ids.is_empty() => { let _ = s.touch(ids[i % ids.len()], t); }
                Op::Update(i, v, tier) if !ids.is_empty() => {
                    let tier = [Tier::Hot, Tier::Warm, Tier::Cold][tier as usize];
                    let _ = s.update_item_atomic(ids[i % ids.len()], ItemDelta { value: Some(v), tier: Some(tier), ..Default::default() });
                }
                Op::Evict(i) if !ids.is_empty() => { let _ = s.evict(ids[i % ids.len()], EvictionRule::Expired); }
                _ => {}
            }
            s.check_invariants().map_err(TestCaseError::fail)?;
            let sizes = s.tier_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), s.live_count());
        }
    }
}
