//! Seeded synthetic workload: interleaved writes, recalls and asks over a
//! topic space with ground-truth value labels.
//!
//! High-value topics (`0..n_high_value_topics`) persist for the whole run.
//! Low-value topics drift: at any point writes go to a small window of
//! active low-value topics that slides across the run. Queries either pick a
//! topic from recent writes (favouring high-value ones) or, with probability
//! `old_reference_fraction`, a topic first written in the oldest third of the
//! writes so far.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub n_writes: usize,
    pub n_recalls: usize,
    pub n_asks: usize,
    pub n_topics: usize,
    /// Fraction of writes that are high-value.
    pub high_value_fraction: f64,
    pub high_value_threshold: f64,
    /// Seconds of virtual time per event.
    pub virtual_tick: f64,
    pub old_reference_fraction: f64,
    /// Defaults to `round(high_value_fraction * n_topics)`.
    pub n_high_value_topics: Option<usize>,
    pub active_low_value_topics: usize,
    /// Number of most recent writes whose topics count as "recent".
    pub recent_window: usize,
    /// Probability a recent-topic query picks a high-value topic when both kinds are present.
    pub recent_high_value_bias: f64,
    pub namespace: String,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            seed: 42,
            n_writes: 5_000,
            n_recalls: 1_000,
            n_asks: 1_000,
            n_topics: 50,
            high_value_fraction: 0.2,
            high_value_threshold: 0.8,
            virtual_tick: 0.5,
            old_reference_fraction: 0.9,
            n_high_value_topics: None,
            active_low_value_topics: 4,
            recent_window: 100,
            recent_high_value_bias: 0.95,
            namespace: "default".into(),
        }
    }
}

impl WorkloadSpec {
    pub fn scaled(mut self, scale: Scale) -> Self {
        let (w, r, a) = match scale {
            Scale::Desk => (5_000, 1_000, 1_000),
            Scale::Paper => (50_000, 10_000, 10_000),
        };
        self.n_writes = w;
        self.n_recalls = r;
        self.n_asks = a;
        self
    }

    pub fn high_value_topics(&self) -> usize {
        self.n_high_value_topics
            .unwrap_or_else(|| libm::round(self.high_value_fraction * self.n_topics as f64) as usize)
            .min(self.n_topics)
    }

    pub fn total_events(&self) -> usize {
        self.n_writes + self.n_recalls + self.n_asks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Write,
    Recall,
    Ask,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Write => "write",
            EventKind::Recall => "recall",
            EventKind::Ask => "ask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    pub t: f64,
    pub kind: EventKind,
    pub namespace: String,
    pub topic: usize,
    pub text: String,
    /// Set on writes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_value: Option<f64>,
}

const WORDS: [&str; 48] = [
    "meeting", "budget", "travel", "preference", "deadline", "address", "project", "invoice",
    "schedule", "contact", "allergy", "password", "hotel", "flight", "report", "review",
    "garden", "recipe", "doctor", "birthday", "gift", "lease", "car", "insurance",
    "library", "course", "exam", "vendor", "server", "backup", "release", "ticket",
    "coffee", "lunch", "gym", "music", "movie", "book", "phone", "laptop",
    "team", "client", "contract", "payment", "shipping", "return", "warranty", "note",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(WORDS[rng.random_range(0..WORDS.len())]);
    }
    s
}

/// Interleaving that keeps every prefix within one event per kind of the
/// exact ratio: event `j` of a kind with count `c` is placed at `(j + u)/c`.
fn schedule(rng: &mut ChaCha8Rng, counts: [usize; 3]) -> Vec<EventKind> {
    let kinds = [EventKind::Write, EventKind::Recall, EventKind::Ask];
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(counts.iter().sum());
    for (k, &c) in counts.iter().enumerate() {
        for j in 0..c {
            let u: f64 = rng.random();
            keyed.push(((j as f64 + u) / c as f64, k));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, k)| kinds[k]).collect()
}

/// Generates the full event stream for `spec`.
pub fn generate(spec: &WorkloadSpec) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kinds = schedule(&mut rng, [spec.n_writes, spec.n_recalls, spec.n_asks]);
    let n_hv = spec.high_value_topics();
    let hv: Vec<usize> = (0..n_hv).collect();
    let lv: Vec<usize> = (n_hv..spec.n_topics).collect();
    let active = spec.active_low_value_topics.clamp(1, lv.len().max(1));

    let mut events = Vec::with_capacity(kinds.len());
    let mut w = 0usize;
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    let mut recent: VecDeque<usize> = VecDeque::with_capacity(spec.recent_window + 1);

    for (i, kind) in kinds.into_iter().enumerate() {
        let t = (i + 1) as f64 * spec.virtual_tick;
        let (topic, text, label) = match kind {
            EventKind::Write => {
                let pick_hv = !hv.is_empty() && (lv.is_empty() || rng.random::<f64>() < spec.high_value_fraction);
                let (topic, label) = if pick_hv {
                    let t = hv[rng.random_range(0..hv.len())];
                    (t, rng.random_range(0.8..=1.0))
                } else {
                    let pos = w * lv.len() / spec.n_writes.max(1);
                    let lo = pos.saturating_sub(active / 2).min(lv.len() - active);
                    (lv[lo + rng.random_range(0..active)], rng.random_range(0.0..0.6))
                };
                first.entry(topic).or_insert(w);
                recent.push_back(topic);
                if recent.len() > spec.recent_window.max(1) {
                    recent.pop_front();
                }
                w += 1;
                let text = format!("topic:{topic} note {i}: {}", words(&mut rng, 6, 18));
                (topic, text, Some(label))
            }
            EventKind::Recall | EventKind::Ask => {
                let topic = if first.is_empty() {
                    rng.random_range(0..spec.n_topics.max(1))
                } else if rng.random::<f64>() < spec.old_reference_fraction {
                    let cut = w / 3;
                    let pool: Vec<usize> = first.iter().filter(|(_, &f)| f <= cut).map(|(t, _)| *t).collect();
                    pool[rng.random_range(0..pool.len())]
                } else {
                    let pool: BTreeSet<usize> = recent.iter().copied().collect();
                    let (hp, lp): (Vec<usize>, Vec<usize>) = pool.into_iter().partition(|t| *t < n_hv);
                    if !hp.is_empty() && (lp.is_empty() || rng.random::<f64>() < spec.recent_high_value_bias) {
                        hp[rng.random_range(0..hp.len())]
                    } else {
                        lp[rng.random_range(0..lp.len())]
                    }
                };
                let text = format!("topic:{topic} {} {i}: {}", kind.as_str(), words(&mut rng, 4, 10));
                (topic, text, None)
            }
        };
        events.push(TraceEvent {
            index: i as u64,
            t,
            kind,
            namespace: spec.namespace.clone(),
            topic,
            text,
            label_value: label,
        });
    }
    events
}
