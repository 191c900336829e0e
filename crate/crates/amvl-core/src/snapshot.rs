//! Binary snapshot codec.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "AMVLSNAP" | version u32 | dim u32 | item count u64
//! meta record   (u32 length + body)
//! item records  (u32 length + body) × count
//! lru count u64 | (id u64, seq u64) × lru count
//! crc32 of everything above
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::config::{LifecycleThresholds, MemoryItem, Tier, ValueParams};
use crate::store::{MemoryStore, StoreError, StoreOptions};

pub const MAGIC: &[u8; 8] = b"AMVLSNAP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotError {
    Corrupt(String),
    Store(StoreError),
}

impl fmt::Display for SnapshotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnapshotError::Corrupt(m) => write!(f, "corrupt snapshot: {m}"),
            SnapshotError::Store(e) => write!(f, "snapshot restore: {e}"),
        }
    }
}

fn corrupt(m: &str) -> SnapshotError {
    SnapshotError::Corrupt(m.into())
}

struct W(Vec<u8>);

impl W {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn record(&mut self, body: W) {
        self.u32(body.0.len() as u32);
        self.0.extend_from_slice(&body.0);
    }
}

struct R<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> R<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, SnapshotError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }
    fn record(&mut self) -> Result<R<'a>, SnapshotError> {
        let n = self.u32()? as usize;
        Ok(R { buf: self.take(n)?, at: 0 })
    }
    fn done(&self) -> Result<(), SnapshotError> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(corrupt("trailing bytes in record"))
        }
    }
}

fn tier_code(t: Tier) -> u8 {
    t.index() as u8
}

fn tier_from(c: u8) -> Result<Tier, SnapshotError> {
    Tier::ALL.get(c as usize).copied().ok_or_else(|| corrupt("bad tier"))
}

/// Serializes the full store state. Deterministic for equal stores.
pub fn encode(store: &MemoryStore) -> Vec<u8> {
    let mut w = W(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(store.dim() as u32);
    w.u64(store.total_count() as u64);

    let mut meta = W(Vec::new());
    let p = store.params();
    for v in [p.alpha, p.beta, p.lambda, p.v_max, p.v_init] {
        meta.f64(v);
    }
    let t = store.thresholds();
    for v in [t.theta_h_up, t.theta_h_down, t.theta_w_up, t.theta_w_down, t.theta_e] {
        meta.f64(v);
    }
    let o = store.options();
    meta.u64(o.max_items.map(|m| m as u64 + 1).unwrap_or(0));
    meta.u8(o.track_ttl as u8);
    meta.u8(o.track_lru as u8);
    meta.u64(store.next_id());
    meta.u64(store.next_seq());
    w.record(meta);

    for it in store.items() {
        let mut r = W(Vec::new());
        r.u64(it.id);
        r.u8(it.evicted as u8);
        r.u8(tier_code(it.tier));
        r.u8(it.t_last_access.is_some() as u8);
        r.f64(it.value);
        r.f64(it.t_last);
        r.f64(it.t_created);
        r.f64(it.t_last_access.unwrap_or(0.0));
        r.f64(it.label_value);
        r.str(&it.namespace);
        r.str(&it.content);
        r.u32(it.embedding.len() as u32);
        for x in &it.embedding {
            r.0.extend_from_slice(&x.to_le_bytes());
        }
        w.record(r);
    }

    let lru: Vec<(u64, u64)> = store.lru_pairs().collect();
    w.u64(lru.len() as u64);
    for (id, seq) in lru {
        w.u64(id);
        w.u64(seq);
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

/// Parses and verifies a snapshot produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<MemoryStore, SnapshotError> {
    if bytes.len() < MAGIC.len() + 4 + 4 + 8 + 4 {
        return Err(corrupt("truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let crc = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != crc {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = R { buf: body, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if r.u32()? != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let dim = r.u32()? as usize;
    let count = r.u64()? as usize;

    let mut m = r.record()?;
    let params = ValueParams { alpha: m.f64()?, beta: m.f64()?, lambda: m.f64()?, v_max: m.f64()?, v_init: m.f64()? };
    let thresholds = LifecycleThresholds {
        theta_h_up: m.f64()?,
        theta_h_down: m.f64()?,
        theta_w_up: m.f64()?,
        theta_w_down: m.f64()?,
        theta_e: m.f64()?,
    };
    let max = m.u64()?;
    let options = StoreOptions {
        max_items: if max == 0 { None } else { Some((max - 1) as usize) },
        track_ttl: m.u8()? != 0,
        track_lru: m.u8()? != 0,
    };
    let next_id = m.u64()?;
    let next_seq = m.u64()?;
    m.done()?;

    let mut items = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut x = r.record()?;
        let id = x.u64()?;
        let evicted = x.u8()? != 0;
        let tier = tier_from(x.u8()?)?;
        let has_access = x.u8()? != 0;
        let value = x.f64()?;
        let t_last = x.f64()?;
        let t_created = x.f64()?;
        let t_access = x.f64()?;
        let label_value = x.f64()?;
        let namespace = x.str()?;
        let content = x.str()?;
        let n = x.u32()? as usize;
        if n != dim {
            return Err(corrupt("embedding dimension"));
        }
        let mut embedding = Vec::with_capacity(n);
        for _ in 0..n {
            embedding.push(f32::from_le_bytes(x.take(4)?.try_into().unwrap()));
        }
        x.done()?;
        items.push(MemoryItem {
            id,
            namespace,
            content,
            embedding,
            value,
            t_last,
            t_created,
            t_last_access: has_access.then_some(t_access),
            tier,
            label_value,
            evicted,
        });
    }
    let n_lru = r.u64()? as usize;
    let mut lru = Vec::with_capacity(n_lru.min(1 << 20));
    for _ in 0..n_lru {
        lru.push((r.u64()?, r.u64()?));
    }
    r.done()?;
    MemoryStore::from_parts(dim, params, thresholds, options, next_id, next_seq, items, lru).map_err(SnapshotError::Store)
}
