//! Exact safety-violation probabilities for proof-of-work longest-chain
//! consensus with bounded network delay, under the bait-and-switch attack.
//!
//! The crate provides:
//!
//! * [`model`]: the compact attack state `[m, d, n, (l_{m∧d}, …, l_d)]`, its
//!   transition rules, and a full block-tree reference model.
//! * [`policy`]: bait-and-switch, private mining and table-driven policies.
//! * [`analytic`]: the race pmf `e(i)`, the window increment `P(W | L)`, the
//!   epoch transition matrices and the closed-form violation probabilities for
//!   height 1 and for a general target block.
//! * [`mdp`]: zero-delay value iteration with certified value brackets.
//! * [`montecarlo`]: seeded continuous-time simulators used as oracles.

pub mod analytic;
pub mod error;
pub mod format;
pub mod mdp;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod params;
pub mod policy;
pub mod tradeoff;

pub use error::{Error, Result};
pub use params::ProtocolParams;
