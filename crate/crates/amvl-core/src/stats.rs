//! Nearest-rank percentiles.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptySamples;

impl core::fmt::Display for EmptySamples {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("percentile of an empty sample")
    }
}

/// 1-based rank `ceil(p/100 * n)` clamped to `[1, n]`.
pub fn nearest_rank(n: usize, p: f64) -> usize {
    let r = libm::ceil(p / 100.0 * n as f64);
    if r < 1.0 {
        1
    } else if r > n as f64 {
        n
    } else {
        r as usize
    }
}

/// Nearest-rank percentile of `samples` (any order).
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, EmptySamples> {
    if samples.is_empty() {
        return Err(EmptySamples);
    }
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&s, p))
}

/// Same as [`percentile`] for an already ascending, nonempty slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    sorted[nearest_rank(sorted.len(), p) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_hundred() {
        let s: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(percentile(&s, 95.0), Ok(95.0));
        assert_eq!(percentile(&s, 0.0), Ok(1.0));
        assert_eq!(percentile(&s, 100.0), Ok(100.0));
    }

    #[test]
    fn singleton_and_empty() {
        for p in [0.0, 50.0, 99.0, 100.0] {
            assert_eq!(percentile(&[7.0], p), Ok(7.0));
        }
        assert_eq!(percentile(&[], 50.0), Err(EmptySamples));
    }
}
