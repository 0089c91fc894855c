//! Pursuit-evasion laboratory for studying team fairness in cooperative
//! multi-agent reinforcement learning.
//!
//! The crate is split by concern:
//!
//! - [`env`]: deterministic 2-D pursuit-evasion simulator with a potential-field
//!   evader and a greedy pursuer baseline.
//! - [`tinynet`]: dense MLPs with exact reverse-mode gradients, clipped SGD and
//!   Polyak target copies.
//! - [`train`]: decentralized DDPG with a shared replay buffer and a pursuer
//!   velocity curriculum.
//! - [`fairness`]: parameter tying (Fair-E), the equivariance regularizer
//!   (Fair-ER) and the team-fairness mutual-information score.
//! - [`harness`]: run matrices, evaluation protocol, persistence and aggregation.
//! - [`verify`]: the invariant suite behind `fairpursuit verify`.

pub mod env;
pub mod error;
pub mod fairness;
pub mod harness;
pub mod io;
pub mod plot;
pub mod policy;
pub mod tinynet;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
