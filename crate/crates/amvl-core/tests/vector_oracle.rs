use amvl_core::snapshot;
use amvl_core::store::{EvictionRule, StoreOptions};
use amvl_core::{FlatIndex, LifecycleThresholds, MemoryStore, ValueParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const D: usize = 64;

fn random_unit(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let raw: Vec<f64> = (0..D).map(|_| StandardNormal.sample(rng)).collect();
    let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.iter().map(|x| (x / n) as f32).collect()
}

/// Scores every allowlisted vector and fully sorts. `allow` must be sorted.
fn brute_force(vectors: &[(u64, Vec<f32>)], query: &[f32], allow: &[u64], k: usize) -> Vec<(u64, f64)> {
    let mut all: Vec<(u64, f64)> = vectors
        .iter()
        .filter(|(id, _)| allow.binary_search(id).is_ok())
        .map(|(id, v)| (*id, v.iter().zip(query).fold(0.0f64, |s, (a, b)| s + *a as f64 * *b as f64)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[test]
fn scan_equals_full_sort_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for inst in 0..500 {
        let n = rng.random_range(1..=5_000usize);
        let mut vectors: Vec<(u64, Vec<f32>)> = Vec::with_capacity(n);
        for i in 0..n {
            // Every tenth vector duplicates an earlier one so ties occur.
            let v = if i > 0 && i % 10 == 0 {
                vectors[rng.random_range(0..i)].1.clone()
            } else {
                random_unit(&mut rng)
            };
            vectors.push((i as u64 * 3 + 1, v));
        }
        let mut idx = FlatIndex::new(D);
        for (id, v) in &vectors {
            idx.index_vector(*id, v).unwrap();
        }
        let mut allow: Vec<u64> = vectors.iter().map(|(id, _)| *id).collect();
        allow.shuffle(&mut rng);
        allow.truncate(rng.random_range(1..=n));
        let query = if rng.random_bool(0.2) { vectors[0].1.clone() } else { random_unit(&mut rng) };
        let k = rng.random_range(1..=64usize);
        let got = idx.scan(&query, &allow, k).unwrap();
        let mut allow_sorted = allow.clone();
        allow_sorted.sort_unstable();
        let want = brute_force(&vectors, &query, &allow_sorted, k);
        assert_eq!(got.hits, want, "instance {inst}");
        assert_eq!(got.vectors_scanned, allow.len());
    }
}

#[test]
fn thousand_vectors_top_48() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let vectors: Vec<(u64, Vec<f32>)> = (1..=1000).map(|id| (id, random_unit(&mut rng))).collect();
    let mut idx = FlatIndex::new(D);
    for (id, v) in &vectors {
        idx.index_vector(*id, v).unwrap();
    }
    let all: Vec<u64> = (1..=1000).collect();
    let q = random_unit(&mut rng);
    assert_eq!(idx.scan(&q, &all, 48).unwrap().hits, brute_force(&vectors, &q, &all, 48));
}

#[test]
fn index_churn_survives_snapshot() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut s = MemoryStore::new(D, ValueParams::default(), LifecycleThresholds::default(), StoreOptions::default());
    let mut live: Vec<u64> = Vec::new();
    for op in 0..50_000 {
        if live.len() > 100 && rng.random_bool(0.4) {
            let i = rng.random_range(0..live.len());
            let id = live.swap_remove(i);
            s.evict(id, EvictionRule::Expired).unwrap();
        } else {
            let id = s.put("ns", "x", random_unit(&mut rng), 0.5, op as f64).unwrap();
            live.push(id);
        }
    }
    let restored = snapshot::decode(&snapshot::encode(&s)).unwrap();
    live.sort_unstable();
    for _ in 0..20 {
        let q = random_unit(&mut rng);
        let a = s.index().scan(&q, &live, 48).unwrap();
        let b = restored.index().scan(&q, &live, 48).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn scan_cost_grows_linearly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut idx = FlatIndex::new(D);
    for id in 1..=10_000u64 {
        idx.index_vector(id, &random_unit(&mut rng)).unwrap();
    }
    let q = random_unit(&mut rng);
    for size in [100usize, 1_000, 10_000] {
        let allow: Vec<u64> = (1..=size as u64).collect();
        assert_eq!(idx.scan(&q, &allow, 48).unwrap().vectors_scanned, size);
    }
}

proptest! {
    #[test]
    fn hits_stay_inside_allowlist(seed in any::<u64>(), n in 1..300usize, k in 1..40usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = FlatIndex::new(D);
        for id in 1..=n as u64 {
            idx.index_vector(id, &random_unit(&mut rng)).unwrap();
        }
        let allow: Vec<u64> = (1..=n as u64).filter(|_| rng.random_bool(0.3)).collect();
        let q = random_unit(&mut rng);
        let r = idx.scan(&q, &allow, k).unwrap();
        prop_assert!(r.hits.iter().all(|(id, _)| allow.contains(id)));
        prop_assert_eq!(r.hits.len(), k.min(allow.len()));
        prop_assert_eq!(r.clone(), idx.scan(&q, &allow, k).unwrap());
    }
}
