use std::sync::Arc;
use std::time::Duration;

use amvl::config::AppConfig;
use amvl::engine::{Engine, EngineOptions, QueryRequest, WallClock};
use amvl::harness::run_policy;
use amvl::maintenance::Maintainer;
use amvl_core::store::{ItemDelta, StoreOptions};
use amvl_core::workload::generate;
use amvl_core::{LifecycleThresholds, MemoryStore, PolicyKind, Tier, ValueParams};
use parking_lot::RwLock;

fn unit(i: u64) -> Vec<f32> {
    let mut v = vec![0.0; 8];
    v[(i % 8) as usize] = 1.0;
    v
}

#[test]
fn concurrent_updates_to_distinct_items_all_land() {
    let mut s = MemoryStore::new(8, ValueParams::default(), LifecycleThresholds::default(), StoreOptions::default());
    for i in 0..1_000u64 {
        s.put("ns", "x", unit(i), 0.5, 0.0).unwrap();
    }
    let mut oracle = s.clone();
    let delta = |id: u64| ItemDelta {
        value: Some(id as f64 * 0.01),
        tier: Some(Tier::ALL[(id % 3) as usize]),
        ..Default::default()
    };
    let shared = Arc::new(RwLock::new(s));
    std::thread::scope(|scope| {
        for w in 0..8u64 {
            let shared = shared.clone();
            scope.spawn(move || {
                for id in (1..=1_000u64).filter(|id| id % 8 == w) {
                    shared.write().update_item_atomic(id, delta(id)).unwrap();
                    // Readers interleave with writers and must see a consistent partition.
                    shared.read().check_invariants().unwrap();
                }
            });
        }
    });
    for id in 1..=1_000u64 {
        oracle.update_item_atomic(id, delta(id)).unwrap();
    }
    let s = shared.read();
    s.check_invariants().unwrap();
    assert_eq!(s.items().cloned().collect::<Vec<_>>(), oracle.items().cloned().collect::<Vec<_>>());
    for t in Tier::ALL {
        assert_eq!(s.tier_set(t), oracle.tier_set(t));
    }
}

#[test]
fn engine_under_parallel_load_with_background_sweeps() {
    let mut cfg = AppConfig::default();
    cfg.lifecycle.sweep_batch = 64;
    let engine = Arc::new(Engine::new(&cfg, EngineOptions::new(PolicyKind::Amvl, Arc::new(WallClock::new()))).unwrap());
    let maint = Maintainer::timer(engine.clone(), Duration::from_millis(2));
    std::thread::scope(|scope| {
        for w in 0..8u64 {
            let engine = engine.clone();
            scope.spawn(move || {
                for i in 0..150u64 {
                    let topic = (w * 7 + i) % 20;
                    engine.write(engine.next_request_index(), "default", &format!("topic:{topic} w{w} n{i}"), 0.5).unwrap();
                    let q = QueryRequest {
                        request_index: engine.next_request_index(),
                        namespace: "default".into(),
                        text: format!("topic:{topic} q"),
                        n: None,
                    };
                    if i % 2 == 0 {
                        engine.recall(&q).unwrap();
                    } else {
                        engine.ask(&q).unwrap();
                    }
                }
            });
        }
    });
    maint.stop();
    let s = engine.finish().unwrap();
    engine.with_store(|st| st.check_invariants()).unwrap();
    assert_eq!(s.requests, 8 * 150 * 2);
    assert_eq!(s.errors, 0);
    assert_eq!(s.bound_violations, 0);
    assert_eq!(s.cap_violations, 0);
    assert_eq!((s.request_path_sweeps, s.request_path_tier_changes, s.request_path_evictions), (0, 0, 0));
    assert!(s.sweeps > 0);
}

#[test]
fn multi_worker_harness_keeps_bounds() {
    let mut cfg = AppConfig::default();
    cfg.workload.n_writes = 1_000;
    cfg.workload.n_recalls = 200;
    cfg.workload.n_asks = 200;
    cfg.harness.workers = 4;
    let trace = generate(&cfg.workload);
    let dir = tempfile::tempdir().unwrap();
    let s = run_policy(&cfg, PolicyKind::Amvl, &trace, &dir.path().join("amvl.ndjson"), None).unwrap();
    assert_eq!(s.requests, 1_400);
    assert_eq!((s.bound_violations, s.cap_violations), (0, 0));
    assert_eq!((s.request_path_sweeps, s.request_path_tier_changes, s.request_path_evictions), (0, 0, 0));
}
