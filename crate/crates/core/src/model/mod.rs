//! Attack-state representations.
//!
//! [`CompactState`] is the reduced state used by policies, analytics and the
//! simulators. [`BlockTree`] is the full reference model used to validate
//! the reduction.

mod state;
mod tree;

pub use state::{ActionKind, Arrival, Branch, CompactState, StateClass, Timer, TIMER_TOL};
pub use tree::{Block, BlockKind, BlockTree, TreeEvent};
