//! Pass/fail evaluation of a three-policy run.

use amvl_core::PolicyKind;
use serde::{Deserialize, Serialize};

use crate::analyze::RunReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!("[{}] {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

/// Minimum TTL/AMV-L and TTL/LRU ratios of p95 candidate-set size.
pub const FOOTPRINT_TTL_OVER_AMVL: f64 = 3.0;
pub const FOOTPRINT_TTL_OVER_LRU: f64 = 5.0;
/// Relative gain in retrieved value over TTL required of AMV-L and LRU.
pub const QUALITY_GAIN_OVER_TTL: f64 = 0.20;
/// Allowed relative gap between AMV-L and LRU retrieved value.
pub const QUALITY_AMVL_LRU_GAP: f64 = 0.02;
pub const SHARE_GAIN_OVER_TTL: f64 = 1.5;
pub const TAIL_LATENCY_RATIO: f64 = 2.0;
pub const TAIL_SCAN_RATIO: f64 = 3.0;

fn find(reports: &[RunReport], p: PolicyKind) -> Option<&RunReport> {
    reports.iter().find(|r| r.policy == p.as_str())
}

fn fail(id: u8, name: &str, detail: String) -> CheckResult {
    CheckResult { id, name: name.into(), passed: false, detail }
}

fn num(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

/// Evaluates the run-level criteria that need TTL, LRU and AMV-L reports.
pub fn evaluate(reports: &[RunReport]) -> Vec<CheckResult> {
    let (Some(ttl), Some(lru), Some(amvl)) =
        (find(reports, PolicyKind::Ttl), find(reports, PolicyKind::Lru), find(reports, PolicyKind::Amvl))
    else {
        return vec![fail(0, "policies", "need TTL, LRU and AMV-L reports".into())];
    };
    vec![bound(amvl), footprint(ttl, lru, amvl), quality(ttl, lru, amvl), cap(&[ttl, lru, amvl]), tail(ttl, amvl), isolation(&[ttl, lru, amvl])]
}

fn bound(amvl: &RunReport) -> CheckResult {
    let counted = amvl.summary.as_ref().map(|s| s.bound_violations);
    let passed = amvl.retrieval_requests > 0 && amvl.bound_violations == 0 && counted == Some(0);
    CheckResult {
        id: 1,
        name: "eligibility bound |R| <= |T_H| + k".into(),
        passed,
        detail: format!(
            "{} AMV-L retrievals, {} over bound in telemetry, {:?} counted by the engine",
            amvl.retrieval_requests, amvl.bound_violations, counted
        ),
    }
}

fn footprint(ttl: &RunReport, lru: &RunReport, amvl: &RunReport) -> CheckResult {
    let (rt, rl, ra) = (num(ttl.retrieval_set_p95), num(lru.retrieval_set_p95), num(amvl.retrieval_set_p95));
    let (st, sl, sa) = (num(ttl.vectors_scanned_p95), num(lru.vectors_scanned_p95), num(amvl.vectors_scanned_p95));
    let passed = rl < ra
        && ra < rt
        && sl < sa
        && sa < st
        && rt / ra >= FOOTPRINT_TTL_OVER_AMVL
        && rt / rl >= FOOTPRINT_TTL_OVER_LRU
        && st / sa >= FOOTPRINT_TTL_OVER_AMVL
        && st / sl >= FOOTPRINT_TTL_OVER_LRU;
    CheckResult {
        id: 2,
        name: "footprint LRU < AMV-L < TTL".into(),
        passed,
        detail: format!(
            "p95 |R| TTL {rt} / LRU {rl} / AMV-L {ra}, scanned {st} / {sl} / {sa}; TTL/AMV-L {:.2}x (>= {FOOTPRINT_TTL_OVER_AMVL}), TTL/LRU {:.2}x (>= {FOOTPRINT_TTL_OVER_LRU})",
            rt / ra,
            rt / rl
        ),
    }
}

fn quality(ttl: &RunReport, lru: &RunReport, amvl: &RunReport) -> CheckResult {
    let (vt, vl, va) = (num(ttl.retrieved_value_mean), num(lru.retrieved_value_mean), num(amvl.retrieved_value_mean));
    let (ht, hl, ha) = (num(ttl.high_value_share_pct), num(lru.high_value_share_pct), num(amvl.high_value_share_pct));
    let gap = (va / vl - 1.0).abs();
    let passed = va >= vt * (1.0 + QUALITY_GAIN_OVER_TTL)
        && vl >= vt * (1.0 + QUALITY_GAIN_OVER_TTL)
        && gap <= QUALITY_AMVL_LRU_GAP
        && ha >= SHARE_GAIN_OVER_TTL * ht
        && hl >= SHARE_GAIN_OVER_TTL * ht;
    CheckResult {
        id: 3,
        name: "retrieval quality".into(),
        passed,
        detail: format!(
            "value mean TTL {vt:.3} / LRU {vl:.3} / AMV-L {va:.3} (AMV-L/TTL {:.2}x, LRU/TTL {:.2}x, AMV-L vs LRU {:.2}%); high-value share {ht:.1}% / {hl:.1}% / {ha:.1}%",
            va / vt,
            vl / vt,
            gap * 100.0
        ),
    }
}

fn cap(runs: &[&RunReport]) -> CheckResult {
    let caps: Vec<Option<usize>> = runs.iter().map(|r| r.prompt_cap_n).collect();
    let same_cap = caps.windows(2).all(|w| w[0] == w[1]) && caps[0].is_some();
    let mut passed = same_cap;
    let mut parts = Vec::new();
    for r in runs {
        let n = r.prompt_cap_n.unwrap_or(0) as f64;
        let expect = n.min(num(r.retrieval_set_p95));
        let ok = r.cap_violations == 0
            && r.cap_mismatches == 0
            && num(r.chunks_max) <= n
            && num(r.chunks_p95) == expect;
        passed &= ok;
        parts.push(format!(
            "{} chunks p95 {} (expected {expect}), max {}, over-cap {}, mismatched {}",
            r.policy,
            num(r.chunks_p95),
            num(r.chunks_max),
            r.cap_violations,
            r.cap_mismatches
        ));
    }
    CheckResult { id: 4, name: "cap invariance".into(), passed, detail: format!("n = {:?}; {}", caps[0], parts.join("; ")) }
}

fn tail(ttl: &RunReport, amvl: &RunReport) -> CheckResult {
    let lt = ttl.latency.as_ref().map(|l| l.p99_ms).unwrap_or(f64::NAN);
    let la = amvl.latency.as_ref().map(|l| l.p99_ms).unwrap_or(f64::NAN);
    let (st, sa) = (num(ttl.vectors_scanned_p99), num(amvl.vectors_scanned_p99));
    let latency_ok = lt >= TAIL_LATENCY_RATIO * la;
    let proxy_ok = st >= TAIL_SCAN_RATIO * sa;
    CheckResult {
        id: 5,
        name: "tail direction".into(),
        passed: latency_ok || proxy_ok,
        detail: format!(
            "p99 latency TTL {lt:.3} ms vs AMV-L {la:.3} ms ({:.2}x, need {TAIL_LATENCY_RATIO}x: {}); p99 scanned {st} vs {sa} ({:.2}x, need {TAIL_SCAN_RATIO}x: {})",
            lt / la,
            if latency_ok { "met" } else { "not met" },
            st / sa,
            if proxy_ok { "met" } else { "not met" }
        ),
    }
}

fn isolation(runs: &[&RunReport]) -> CheckResult {
    let mut passed = true;
    let mut parts = Vec::new();
    for r in runs {
        match &r.summary {
            Some(s) => {
                passed &= s.request_path_sweeps == 0 && s.request_path_tier_changes == 0 && s.request_path_evictions == 0;
                parts.push(format!(
                    "{}: {} sweeps, {} tier changes, {} evictions on the request path ({} sweeps, {} promotions, {} demotions, {} evictions in maintenance)",
                    r.policy,
                    s.request_path_sweeps,
                    s.request_path_tier_changes,
                    s.request_path_evictions,
                    s.sweeps,
                    s.promoted,
                    s.demoted,
                    s.evicted + s.expired
                ));
            }
            None => {
                passed = false;
                parts.push(format!("{}: no run summary", r.policy));
            }
        }
    }
    CheckResult { id: 10, name: "request-path isolation".into(), passed, detail: parts.join("; ") }
}
