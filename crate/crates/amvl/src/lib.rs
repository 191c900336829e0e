//! Engine, persistence, telemetry, analysis, benchmark harness and HTTP
//! gateway around the `amvl-core` data structures.

pub use amvl_core as core;

pub mod analyze;
pub mod checks;
pub mod compare;
pub mod config;
pub mod engine;
pub mod gateway;
pub mod harness;
pub mod maintenance;
pub mod persist;
pub mod telemetry;
