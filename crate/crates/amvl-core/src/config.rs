//! Shared domain types, parameter bundles and the clock abstraction.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Lifecycle tier of a stored item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Hot,
    Warm,
    Cold,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Hot, Tier::Warm, Tier::Cold];

    pub fn index(self) -> usize {
        match self {
            Tier::Hot => 0,
            Tier::Warm => 1,
            Tier::Cold => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Hot => "hot",
            Tier::Warm => "warm",
            Tier::Cold => "cold",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One stored memory record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub id: u64,
    pub namespace: String,
    pub content: String,
    pub embedding: Vec<f32>,
    pub value: f64,
    pub t_last: f64,
    pub t_created: f64,
    pub t_last_access: Option<f64>,
    pub tier: Tier,
    /// Ground-truth utility label. Only evaluation code reads this.
    pub label_value: f64,
    pub evicted: bool,
}

impl MemoryItem {
    /// Last use time, falling back to creation time.
    pub fn recency(&self) -> f64 {
        self.t_last_access.unwrap_or(self.t_created)
    }
}

/// Parameters of the value update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueParams {
    pub alpha: f64,
    pub beta: f64,
    /// Decay rate in 1/seconds.
    pub lambda: f64,
    pub v_max: f64,
    pub v_init: f64,
}

impl Default for ValueParams {
    fn default() -> Self {
        ValueParams { alpha: 0.25, beta: 2.0, lambda: 0.05, v_max: 100.0, v_init: 2.0 }
    }
}

/// Hysteresis thresholds. Up-thresholds are inclusive, down and eviction strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifecycleThresholds {
    pub theta_h_up: f64,
    pub theta_h_down: f64,
    pub theta_w_up: f64,
    pub theta_w_down: f64,
    pub theta_e: f64,
}

impl Default for LifecycleThresholds {
    fn default() -> Self {
        LifecycleThresholds {
            theta_h_up: 5.0,
            theta_h_down: 3.0,
            theta_w_up: 1.0,
            theta_w_down: 0.5,
            theta_e: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmMode {
    Random,
    Recency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub warm_budget_k: usize,
    pub prompt_cap_n: usize,
    pub warm_mode: WarmMode,
    pub embedding_dim: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            warm_budget_k: 16,
            prompt_cap_n: 48,
            warm_mode: WarmMode::Random,
            embedding_dim: 64,
        }
    }
}

/// A single violated constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub constraint: String,
}

impl ConfigError {
    fn new(field: &str, constraint: &str) -> Self {
        ConfigError { field: field.to_string(), constraint: constraint.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidatedConfig {
    pub params: ValueParams,
    pub thresholds: LifecycleThresholds,
    pub retrieval: RetrievalConfig,
}

fn positive(errs: &mut Vec<ConfigError>, field: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(ConfigError::new(field, "must be finite and > 0"));
    }
}

/// Checks every invariant and reports all violations at once.
pub fn validate_config(
    params: ValueParams,
    thresholds: LifecycleThresholds,
    retrieval: RetrievalConfig,
) -> Result<ValidatedConfig, Vec<ConfigError>> {
    let mut errs = Vec::new();
    positive(&mut errs, "alpha", params.alpha);
    positive(&mut errs, "beta", params.beta);
    positive(&mut errs, "lambda", params.lambda);
    positive(&mut errs, "v_max", params.v_max);
    positive(&mut errs, "v_init", params.v_init);
    if params.beta < params.alpha {
        errs.push(ConfigError::new("beta", "beta ≥ alpha"));
    }
    if params.v_init > params.v_max {
        errs.push(ConfigError::new("v_init", "v_init ≤ v_max"));
    }

    let t = thresholds;
    let all = [t.theta_h_up, t.theta_h_down, t.theta_w_up, t.theta_w_down, t.theta_e];
    if all.iter().any(|x| !x.is_finite()) {
        errs.push(ConfigError::new("thresholds", "must be finite"));
    } else if !(t.theta_h_up > t.theta_h_down
        && t.theta_h_down > t.theta_w_up
        && t.theta_w_up > t.theta_w_down
        && t.theta_w_down > t.theta_e
        && t.theta_e >= 0.0)
    {
        errs.push(ConfigError::new("thresholds", "ordering"));
    }

    if retrieval.prompt_cap_n == 0 {
        errs.push(ConfigError::new("prompt_cap_n", "must be ≥ 1"));
    }
    if retrieval.embedding_dim == 0 {
        errs.push(ConfigError::new("embedding_dim", "must be ≥ 1"));
    }

    if errs.is_empty() {
        Ok(ValidatedConfig { params, thresholds, retrieval })
    } else {
        Err(errs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Virtual,
    Wall,
}

/// Source of "now" in seconds. Must never go backwards.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
    fn mode(&self) -> ClockMode;
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct VirtualClock {
    bits: AtomicU64,
}

impl VirtualClock {
    pub fn new(t0: f64) -> Self {
        VirtualClock { bits: AtomicU64::new(t0.to_bits()) }
    }

    /// Moves the clock to `t`. Returns false (and leaves the clock alone) if
    /// that would move it backwards.
    pub fn advance_to(&self, t: f64) -> bool {
        let mut cur = self.bits.load(Ordering::Acquire);
        loop {
            if t < f64::from_bits(cur) {
                return false;
            }
            match self.bits.compare_exchange(cur, t.to_bits(), Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return true,
                Err(seen) => cur = seen,
            }
        }
    }

    pub fn tick(&self, dt: f64) -> f64 {
        let t = self.now() + dt;
        self.advance_to(t);
        t
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.bits.load(Ordering::Acquire))
    }

    fn mode(&self) -> ClockMode {
        ClockMode::Virtual
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid() {
        let p = ValueParams { alpha: 1.0, beta: 2.0, lambda: 0.001155, v_max: 100.0, v_init: 5.0 };
        let r = RetrievalConfig { warm_budget_k: 32, ..RetrievalConfig::default() };
        assert!(validate_config(p, LifecycleThresholds::default(), r).is_ok());
        assert!(validate_config(
            ValueParams::default(),
            LifecycleThresholds::default(),
            RetrievalConfig::default()
        )
        .is_ok());
    }

    #[test]
    fn beta_below_alpha_rejected() {
        let p = ValueParams { alpha: 1.0, beta: 0.5, ..ValueParams::default() };
        let errs = validate_config(p, LifecycleThresholds::default(), RetrievalConfig::default())
            .unwrap_err();
        assert_eq!(errs, alloc::vec![ConfigError::new("beta", "beta ≥ alpha")]);
    }

    #[test]
    fn threshold_ordering_rejected() {
        let t = LifecycleThresholds { theta_h_down: 6.0, ..LifecycleThresholds::default() };
        let errs = validate_config(ValueParams::default(), t, RetrievalConfig::default()).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "thresholds");
        assert_eq!(errs[0].constraint, "ordering");
    }

    #[test]
    fn every_violation_is_listed() {
        let p = ValueParams { alpha: -1.0, beta: 0.0, lambda: 0.0, v_max: 1.0, v_init: 2.0 };
        let t = LifecycleThresholds { theta_e: -0.5, ..LifecycleThresholds::default() };
        let r = RetrievalConfig { prompt_cap_n: 0, embedding_dim: 0, ..RetrievalConfig::default() };
        let errs = validate_config(p, t, r).unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        for f in ["alpha", "beta", "lambda", "v_init", "thresholds", "prompt_cap_n", "embedding_dim"] {
            assert!(fields.contains(&f), "missing {f} in {fields:?}");
        }
    }

    #[test]
    fn virtual_clock_is_monotone() {
        let c = VirtualClock::new(0.0);
        assert!(c.advance_to(1.5));
        assert!(!c.advance_to(1.0));
        assert_eq!(c.now(), 1.5);
        assert_eq!(c.tick(0.5), 2.0);
    }
}
