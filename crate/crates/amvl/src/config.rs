//! TOML configuration, one section per module. Unknown keys are rejected.

use std::path::Path;

use amvl_core::embed::EmbedConfig;
use amvl_core::policy::PolicyKind;
use amvl_core::workload::{Scale, WorkloadSpec};
use amvl_core::{validate_config, LifecycleThresholds, RetrievalConfig, ValueParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifecycleSection {
    pub theta_h_up: f64,
    pub theta_h_down: f64,
    pub theta_w_up: f64,
    pub theta_w_down: f64,
    pub theta_e: f64,
    /// Virtual seconds between maintenance sweeps.
    pub sweep_interval_s: f64,
    pub sweep_batch: usize,
    /// Bound of the pending-transition queue; overflow is dropped.
    pub transition_queue_capacity: usize,
}

impl Default for LifecycleSection {
    fn default() -> Self {
        let t = LifecycleThresholds::default();
        LifecycleSection {
            theta_h_up: t.theta_h_up,
            theta_h_down: t.theta_h_down,
            theta_w_up: t.theta_w_up,
            theta_w_down: t.theta_w_down,
            theta_e: t.theta_e,
            sweep_interval_s: 5.0,
            sweep_batch: 1024,
            transition_queue_capacity: 4096,
        }
    }
}

impl LifecycleSection {
    pub fn thresholds(&self) -> LifecycleThresholds {
        LifecycleThresholds {
            theta_h_up: self.theta_h_up,
            theta_h_down: self.theta_h_down,
            theta_w_up: self.theta_w_up,
            theta_w_down: self.theta_w_down,
            theta_e: self.theta_e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    /// Seconds; absent means "longer than any run".
    pub ttl_window_s: Option<f64>,
    pub lru_capacity: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection { ttl_window_s: None, lru_capacity: 128 }
    }
}

impl PolicySection {
    pub fn ttl_window(&self) -> f64 {
        self.ttl_window_s.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub seed: u64,
    pub item_noise: f64,
    pub query_noise: f64,
    pub salience_sep: f64,
    pub query_salience: f64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let e = EmbedConfig::default();
        EmbeddingSection {
            seed: 7,
            item_noise: e.item_noise,
            query_noise: e.query_noise,
            salience_sep: e.salience_sep,
            query_salience: e.query_salience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptSection {
    pub system_prompt: String,
    pub conversation_turns: usize,
    /// Busy-wait per prompt token in the mock answerer. 0 disables it.
    pub synthetic_delay_us_per_token: f64,
}

impl Default for PromptSection {
    fn default() -> Self {
        PromptSection {
            system_prompt: amvl_core::prompt::DEFAULT_SYSTEM_PROMPT.into(),
            conversation_turns: 4,
            synthetic_delay_us_per_token: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoreSection {
    pub max_items: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessSection {
    /// Request workers. More than one breaks run-to-run determinism.
    pub workers: usize,
    pub policies: Vec<PolicyKind>,
    /// Write a mutation log next to each telemetry file.
    pub wal: bool,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection { workers: 1, policies: PolicyKind::ALL.to_vec(), wal: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewaySection {
    pub listen: String,
    pub namespaces: Vec<String>,
    pub workers: usize,
    pub policy: PolicyKind,
    /// Wall seconds between background sweeps in service mode.
    pub sweep_interval_s: f64,
    pub telemetry_path: Option<String>,
    pub wal_path: Option<String>,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection {
            listen: "127.0.0.1:8080".into(),
            namespaces: vec!["default".into()],
            workers: 4,
            policy: PolicyKind::Amvl,
            sweep_interval_s: 5.0,
            telemetry_path: None,
            wal_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub value: ValueParams,
    pub lifecycle: LifecycleSection,
    pub retrieval: RetrievalConfig,
    pub policy: PolicySection,
    pub embedding: EmbeddingSection,
    pub prompt: PromptSection,
    pub store: StoreSection,
    pub workload: WorkloadSpec,
    pub harness: HarnessSection,
    pub gateway: GatewaySection,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: AppConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.workload = self.workload.scaled(scale);
        self
    }

    pub fn embed_config(&self) -> EmbedConfig {
        EmbedConfig {
            seed: self.embedding.seed,
            dim: self.retrieval.embedding_dim,
            n_topics: self.workload.n_topics,
            n_high_value_topics: self.workload.high_value_topics(),
            item_noise: self.embedding.item_noise,
            query_noise: self.embedding.query_noise,
            salience_sep: self.embedding.salience_sep,
            query_salience: self.embedding.query_salience,
        }
    }

    /// Every violated constraint, one per line.
    pub fn validate(&self) -> anyhow::Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if let Err(es) = validate_config(self.value, self.lifecycle.thresholds(), self.retrieval) {
            errs.extend(es.iter().map(|e| e.to_string()));
        }
        if !(self.lifecycle.sweep_interval_s > 0.0) {
            errs.push("lifecycle.sweep_interval_s: must be > 0".into());
        }
        if self.lifecycle.sweep_batch == 0 {
            errs.push("lifecycle.sweep_batch: must be ≥ 1".into());
        }
        if self.lifecycle.transition_queue_capacity == 0 {
            errs.push("lifecycle.transition_queue_capacity: must be ≥ 1".into());
        }
        if let Some(w) = self.policy.ttl_window_s {
            if !(w > 0.0) {
                errs.push("policy.ttl_window_s: must be > 0".into());
            }
        }
        if self.policy.lru_capacity == 0 {
            errs.push("policy.lru_capacity: must be ≥ 1".into());
        }
        let w = &self.workload;
        if w.n_topics == 0 {
            errs.push("workload.n_topics: must be ≥ 1".into());
        }
        for (name, v) in [
            ("high_value_fraction", w.high_value_fraction),
            ("old_reference_fraction", w.old_reference_fraction),
            ("recent_high_value_bias", w.recent_high_value_bias),
            ("high_value_threshold", w.high_value_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("workload.{name}: must lie in [0, 1]"));
            }
        }
        if !(w.virtual_tick > 0.0) {
            errs.push("workload.virtual_tick: must be > 0".into());
        }
        if self.harness.workers == 0 {
            errs.push("harness.workers: must be ≥ 1".into());
        }
        if self.gateway.namespaces.is_empty() {
            errs.push("gateway.namespaces: must not be empty".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            anyhow::bail!("invalid configuration:\n  {}", errs.join("\n  "))
        }
    }
}
