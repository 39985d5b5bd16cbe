//! Self-evolving embodied navigation on a deterministic grid world.
//!
//! The crate wires four ideas into one closed loop:
//!
//! - **Imagine-then-verify planning** ([`planning`]): propose candidate
//!   plans, roll each forward through a world model, score the imagined
//!   futures, execute the best plan's subtasks, replan.
//! - **Dual-grain memory**: a per-episode experience graph
//!   ([`memory_graph`]) reflected over in the short term ([`srm`]) and
//!   distilled into retrievable cross-episode principles ([`lpm`]).
//! - **Heuristic induction** ([`aki`]): recurring success and failure
//!   patterns extracted from episodes, clustered, merged, and fed back
//!   into planning.
//! - **Pluggable cognition** ([`backends`]): every judgment call goes
//!   through one of seven role interfaces, served either by deterministic
//!   gridworld oracles or by a remote chat-completions service.
//!
//! [`gridworld`] supplies the environment and metrics; [`harness`] runs
//! suites, rounds, ablation modes, and transfer experiments over it all.

pub mod aki;
pub mod backends;
pub mod config;
pub mod gridworld;
pub mod harness;
pub mod hashing;
pub mod lpm;
pub mod memory_graph;
pub mod planning;
pub mod srm;
pub mod trail;

pub use config::{load_config, ConfigError, CortexConfig};
