//! Core data structures for value-scored, tiered agent memory.
//!
//! Everything here is `no_std` + `alloc`: the value model, the hysteresis
//! lifecycle, the in-memory store with its flat vector index, candidate
//! builders for the AMV-L / TTL / LRU policies, the synthetic workload and
//! embedder, prompt assembly and the percentile estimator. IO, threads and
//! file formats live in the `amvl` crate.

#![no_std]

extern crate alloc;

pub mod config;
pub mod embed;
pub mod lifecycle;
pub mod policy;
pub mod prompt;
pub mod snapshot;
pub mod stats;
pub mod store;
pub mod value;
pub mod vector;
pub mod workload;

pub use config::{
    validate_config, Clock, ConfigError, LifecycleThresholds, MemoryItem, RetrievalConfig, Tier,
    ValidatedConfig, ValueParams, VirtualClock, WarmMode,
};
pub use lifecycle::{next_tier, SweepReport, TierTransition, TransitionCause};
pub use policy::{CandidateSet, PolicyKind};
pub use store::{MemoryStore, StoreError};
pub use value::{decay_only, updated_value, UsageEvent, ValueError};
pub use vector::{FlatIndex, ScanResult};
