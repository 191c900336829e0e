//! Deterministic mock embeddings with topic structure.
//!
//! Texts carrying a `topic:<n>` tag embed near that topic's base vector;
//! untagged texts get a pseudo-random unit vector. High-value topics share a
//! common "salience" direction (coordinate 0), and queries carry a small
//! component along it, so broadly useful items score slightly higher against
//! any query.

use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub seed: u64,
    pub dim: usize,
    pub n_topics: usize,
    /// Topics `0..n_high_value_topics` lean along the salience direction.
    pub n_high_value_topics: usize,
    pub item_noise: f64,
    pub query_noise: f64,
    pub salience_sep: f64,
    pub query_salience: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            seed: 1,
            dim: 64,
            n_topics: 50,
            n_high_value_topics: 10,
            item_noise: 0.5,
            query_noise: 0.5,
            salience_sep: 0.7,
            query_salience: 0.4,
        }
    }
}

/// FNV-1a over the UTF-8 bytes.
pub fn stable_hash(text: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(text.as_bytes());
    h.finish()
}

/// First `topic:<n>` token in `text`.
pub fn topic_tag(text: &str) -> Option<usize> {
    text.split_whitespace()
        .find_map(|w| w.strip_prefix("topic:"))
        .and_then(|n| n.trim_end_matches(|c: char| !c.is_ascii_digit()).parse().ok())
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

fn to_unit_f32(v: &[f64]) -> Vec<f32> {
    let mut out: Vec<f32> = normalized(v).into_iter().map(|x| x as f32).collect();
    crate::vector::normalize(&mut out);
    out
}

#[derive(Debug, Clone)]
pub struct TopicEmbedder {
    cfg: EmbedConfig,
    bases: Vec<Vec<f64>>,
}

impl TopicEmbedder {
    pub fn new(cfg: EmbedConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut bases = Vec::with_capacity(cfg.n_topics);
        for t in 0..cfg.n_topics {
            let mut b = gaussian(&mut rng, cfg.dim);
            if cfg.dim > 1 {
                b[0] = 0.0;
            }
            let mut b = normalized(&b);
            if t < cfg.n_high_value_topics && cfg.dim > 1 {
                b[0] = cfg.salience_sep;
                b = normalized(&b);
            }
            bases.push(b);
        }
        TopicEmbedder { cfg, bases }
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn base(&self, topic: usize) -> Option<&[f64]> {
        self.bases.get(topic).map(|b| b.as_slice())
    }

    fn text_rng(&self, text: &str, salt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ salt);
        rng.set_stream(stable_hash(text));
        rng
    }

    fn embed(&self, text: &str, noise: f64, salience: f64, salt: u64) -> Vec<f32> {
        let d = self.cfg.dim;
        let mut rng = self.text_rng(text, salt);
        let n = gaussian(&mut rng, d);
        match topic_tag(text).and_then(|t| self.bases.get(t)) {
            Some(base) => {
                let scale = noise / libm::sqrt(d as f64);
                let mut v: Vec<f64> = base.iter().zip(&n).map(|(b, z)| b + scale * z).collect();
                if d > 1 {
                    v[0] += salience;
                }
                to_unit_f32(&v)
            }
            None => to_unit_f32(&n),
        }
    }

    /// Embedding for stored content.
    pub fn embed_item(&self, text: &str) -> Vec<f32> {
        self.embed(text, self.cfg.item_noise, 0.0, 0x17e3)
    }

    /// Embedding for a query.
    pub fn embed_query(&self, text: &str) -> Vec<f32> {
        self.embed(text, self.cfg.query_noise, self.cfg.query_salience, 0x9a71)
    }
}
