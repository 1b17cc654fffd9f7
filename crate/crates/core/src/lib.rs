//! Tropical (min-plus) Viterbi decoding with adaptive threshold pruning.
//!
//! The leniency `θ` of a pruned Viterbi decoder is adapted frame by frame from
//! two measurements of the pruned solution space: a normalised log-residual
//! volume `ν` and an entropy-like score `ε`. The [`localiser`] module applies
//! the decoder to finding which user in a simulated network is the attacker,
//! given per-interval Poisson request counts.

pub mod controller;
pub mod error;
pub mod experiment;
pub mod localiser;
pub mod metrics;
pub mod traffic;
pub mod tropical;
pub mod viterbi;

pub use error::{Error, Result};
