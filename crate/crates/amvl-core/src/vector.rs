//! Exact flat-scan similarity search restricted to an allowlist.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// Tolerance on `||v|| = 1` accepted at index/query time.
pub const NORM_TOLERANCE: f64 = 1e-6;

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum VectorError {
    DimensionMismatch { expected: usize, got: usize },
    NotUnitNorm { norm: f64 },
    DuplicateId(u64),
    NotFound(u64),
    ZeroK,
}

impl fmt::Display for VectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            VectorError::NotUnitNorm { norm } => write!(f, "vector is not unit norm ({norm})"),
            VectorError::DuplicateId(id) => write!(f, "id {id} already indexed"),
            VectorError::NotFound(id) => write!(f, "id {id} not indexed"),
            VectorError::ZeroK => f.write_str("k_out must be ≥ 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanResult {
    /// Sorted by similarity descending, then id ascending.
    pub hits: Vec<(u64, f64)>,
    pub vectors_scanned: usize,
}

/// Dot product accumulated in f64, left to right.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        s += (*x as f64) * (*y as f64);
    }
    s
}

pub fn norm(v: &[f32]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Rescales `v` to unit length in place. Zero vectors are left alone.
pub fn normalize(v: &mut [f32]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
    }
}

/// `(similarity desc, id asc)` as a total order where "better" is `Less`.
pub fn rank_cmp(a: &(u64, f64), b: &(u64, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

struct Ranked(u64, f64);

impl PartialEq for Ranked {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ranked {
    // Max-heap top = worst kept hit.
    fn cmp(&self, o: &Self) -> Ordering {
        rank_cmp(&(self.0, self.1), &(o.0, o.1))
    }
}

/// Contiguous vector storage with an id → slot map and slot reuse.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dim: usize,
    data: Vec<f32>,
    slot_ids: Vec<u64>,
    slot_of: Vec<u32>,
    free: Vec<u32>,
    len: usize,
}

impl FlatIndex {
    pub fn new(dim: usize) -> Self {
        FlatIndex { dim, data: Vec::new(), slot_ids: Vec::new(), slot_of: Vec::new(), free: Vec::new(), len: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn slot(&self, id: u64) -> Option<usize> {
        match self.slot_of.get(id as usize) {
            Some(&s) if s != EMPTY => Some(s as usize),
            _ => None,
        }
    }

    pub fn contains(&self, id: u64) -> bool {
        self.slot(id).is_some()
    }

    pub fn get(&self, id: u64) -> Option<&[f32]> {
        self.slot(id).map(|s| &self.data[s * self.dim..(s + 1) * self.dim])
    }

    fn check(&self, v: &[f32]) -> Result<(), VectorError> {
        if v.len() != self.dim {
            return Err(VectorError::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let n = norm(v);
        if !((n - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(VectorError::NotUnitNorm { norm: n });
        }
        Ok(())
    }

    pub fn index_vector(&mut self, id: u64, embedding: &[f32]) -> Result<(), VectorError> {
        self.check(embedding)?;
        if self.contains(id) {
            return Err(VectorError::DuplicateId(id));
        }
        let slot = match self.free.pop() {
            Some(s) => {
                let s = s as usize;
                self.data[s * self.dim..(s + 1) * self.dim].copy_from_slice(embedding);
                self.slot_ids[s] = id;
                s
            }
            None => {
                self.data.extend_from_slice(embedding);
                self.slot_ids.push(id);
                self.slot_ids.len() - 1
            }
        };
        let idx = id as usize;
        if self.slot_of.len() <= idx {
            self.slot_of.resize(idx + 1, EMPTY);
        }
        self.slot_of[idx] = slot as u32;
        self.len += 1;
        Ok(())
    }

    pub fn remove_vector(&mut self, id: u64) -> Result<(), VectorError> {
        let slot = self.slot(id).ok_or(VectorError::NotFound(id))?;
        self.slot_of[id as usize] = EMPTY;
        self.free.push(slot as u32);
        self.len -= 1;
        Ok(())
    }

    /// Top-`k_out` hits among the allowlisted ids that are indexed. Ids in
    /// `allowlist` must be distinct.
    pub fn scan(&self, query: &[f32], allowlist: &[u64], k_out: usize) -> Result<ScanResult, VectorError> {
        self.check(query)?;
        if k_out == 0 {
            return Err(VectorError::ZeroK);
        }
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k_out + 1);
        let mut scanned = 0usize;
        for &id in allowlist {
            let Some(s) = self.slot(id) else { continue };
            scanned += 1;
            let sim = dot(query, &self.data[s * self.dim..(s + 1) * self.dim]);
            let cand = Ranked(id, sim);
            if heap.len() < k_out {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        let mut hits: Vec<(u64, f64)> = heap.into_iter().map(|r| (r.0, r.1)).collect();
        hits.sort_by(rank_cmp);
        Ok(ScanResult { hits, vectors_scanned: scanned })
    }

    /// Indexed ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.slot_of
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != EMPTY)
            .map(|(i, _)| i as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn e(dim: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn orthonormal_basis() {
        let mut ix = FlatIndex::new(4);
        ix.index_vector(1, &e(4, 0)).unwrap();
        ix.index_vector(2, &e(4, 1)).unwrap();
        let r = ix.scan(&e(4, 0), &[1, 2], 1).unwrap();
        assert_eq!(r.hits, vec![(1, 1.0)]);
        assert_eq!(r.vectors_scanned, 2);
    }

    #[test]
    fn ties_break_on_lower_id() {
        let mut ix = FlatIndex::new(4);
        ix.index_vector(9, &e(4, 2)).unwrap();
        ix.index_vector(3, &e(4, 2)).unwrap();
        let r = ix.scan(&e(4, 2), &[9, 3], 1).unwrap();
        assert_eq!(r.hits, vec![(3, 1.0)]);
    }

    #[test]
    fn removed_ids_are_invisible_and_slots_reused() {
        let mut ix = FlatIndex::new(4);
        ix.index_vector(1, &e(4, 0)).unwrap();
        ix.remove_vector(1).unwrap();
        let r = ix.scan(&e(4, 0), &[1], 5).unwrap();
        assert!(r.hits.is_empty());
        assert_eq!(r.vectors_scanned, 0);
        ix.index_vector(2, &e(4, 1)).unwrap();
        assert_eq!(ix.data.len(), 4);
        assert_eq!(ix.remove_vector(1), Err(VectorError::NotFound(1)));
    }

    #[test]
    fn errors() {
        let mut ix = FlatIndex::new(4);
        assert!(matches!(ix.index_vector(1, &e(3, 0)), Err(VectorError::DimensionMismatch { .. })));
        assert!(matches!(ix.index_vector(1, &[0.5, 0.0, 0.0, 0.0]), Err(VectorError::NotUnitNorm { .. })));
        ix.index_vector(1, &e(4, 0)).unwrap();
        assert_eq!(ix.index_vector(1, &e(4, 1)), Err(VectorError::DuplicateId(1)));
        assert_eq!(ix.scan(&e(4, 0), &[1], 0), Err(VectorError::ZeroK));
        let r = ix.scan(&e(4, 0), &[], 3).unwrap();
        assert_eq!(r, ScanResult::default());
    }
}
