//! Discrete-event simulator and learning library for self-synthesizing
//! wireless MAC protocols on ultra-simple transceivers (no carrier
//! sensing, no collision detection, no network time synchronization).
//!
//! Three access schemes share one channel model:
//! - `rra`: random access where each node learns a transmission
//!   probability with hysteretic Q-learning from piggybacked
//!   neighbourhood throughput feedback,
//! - `tdma-mab`: time-asynchronous TDMA where each node picks its
//!   transmit mini-slot as an f-armed bandit and then compacts the frame
//!   with a micro-slot defragmentation pass,
//! - `aloha`: the pure-ALOHA baseline.
//!
//! Everything is deterministic for a given (config, seed): same inputs,
//! bit-identical metrics.

pub mod aloha;
pub mod config;
pub mod engine;
pub mod learning;
pub mod metrics;
pub mod rng;
pub mod rra;
pub mod runner;
pub mod sim;
pub mod tdma;
pub mod topology;
pub mod traffic;

pub use engine::{Engine, EngineConfig, MacKind, RunOutput};
pub use topology::{NodeId, Topology, TopologyError};
pub use traffic::{DynamicEvent, DynamicEventKind, TrafficModel, TrafficSpec};
