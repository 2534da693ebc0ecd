//! Replays arrival streams through the block tree and the compact state.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{exponential, StreamRng, TAG_TREE};
use crate::error::{Error, Result};
use crate::model::{Arrival, BlockTree, CompactState, TreeEvent};
use crate::params::ProtocolParams;
use crate::policy::Policy;

/// Upper limit on arrivals per replayed stream.
pub const MAX_HORIZON: u32 = 200;

/// Outcome of [`tree_vs_compact_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeCheckReport {
    pub streams: u64,
    pub divergences: u64,
    pub violations: u64,
    /// Index of the first divergent stream.
    pub first_divergence: Option<u64>,
    /// Block trace of the first divergent stream.
    pub trace: Option<String>,
}

impl TreeCheckReport {
    pub fn passed(&self) -> bool {
        self.divergences == 0
    }
}

struct StreamOutcome {
    diverged: bool,
    violated: bool,
    tree: BlockTree,
}

fn replay(params: &ProtocolParams, policy: &dyn Policy, horizon: u32, seed: u64, stream: u64) -> Result<StreamOutcome> {
    let k = params.k;
    let mut rng = StreamRng::for_stream(seed, &[TAG_TREE, stream]);
    let mut tree = BlockTree::new(params.delta);
    let mut state = CompactState::genesis(params.delta);
    let beta = params.beta();
    for _ in 0..horizon {
        let elapsed = exponential(&mut rng, params.lambda());
        let arrival = if rng.random::<f64>() < beta {
            Arrival::A
        } else {
            Arrival::H
        };
        state.advance_in_place(elapsed);
        let action = policy.decide(&state, arrival);
        let parent = tree.parent_for(action)?;
        state.apply_in_place(arrival, action)?;
        tree.apply_in_place(&TreeEvent {
            kind: arrival,
            elapsed,
            parent,
            publish: Vec::new(),
        })?;
        let (t, c) = (tree.is_violation(k), state.is_violation(k));
        if t != c {
            return Ok(StreamOutcome {
                diverged: true,
                violated: c,
                tree,
            });
        }
        if c {
            return Ok(StreamOutcome {
                diverged: false,
                violated: true,
                tree,
            });
        }
    }
    Ok(StreamOutcome {
        diverged: false,
        violated: false,
        tree,
    })
}

/// Drives identical arrival streams through [`BlockTree`] and
/// [`CompactState`] under `policy` and compares violation verdicts after
/// every arrival.
pub fn tree_vs_compact_check(
    params: &ProtocolParams,
    policy: &dyn Policy,
    streams: u64,
    horizon: u32,
    seed: u64,
) -> Result<TreeCheckReport> {
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(Error::InvalidParameter(format!(
            "horizon must lie in 1..={MAX_HORIZON}, got {horizon}"
        )));
    }
    let outcomes: Vec<(bool, bool)> = (0..streams)
        .into_par_iter()
        .map(|s| replay(params, policy, horizon, seed, s).map(|o| (o.diverged, o.violated)))
        .collect::<Result<_>>()?;
    let first = outcomes.iter().position(|o| o.0).map(|i| i as u64);
    let trace = match first {
        Some(s) => Some(replay(params, policy, horizon, seed, s)?.tree.to_trace()),
        None => None,
    };
    Ok(TreeCheckReport {
        streams,
        divergences: outcomes.iter().filter(|o| o.0).count() as u64,
        violations: outcomes.iter().filter(|o| o.1).count() as u64,
        first_divergence: first,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyId;

    #[test]
    fn bitcoin_streams_agree() {
        let p = ProtocolParams::from_lambda_beta(1.0 / 600.0, 0.25, 10.0, 3).unwrap();
        let report = tree_vs_compact_check(&p, &PolicyId::BaitAndSwitch, 2_000, 200, 1).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.violations > 0);
    }

    #[test]
    fn zero_delay_and_no_adversary_streams_agree() {
        let p = ProtocolParams::from_lambda_beta(1.0, 0.3, 0.0, 3).unwrap();
        assert!(tree_vs_compact_check(&p, &PolicyId::BaitAndSwitch, 2_000, 200, 2)
            .unwrap()
            .passed());
        let p = ProtocolParams::new(0.0, 0.1, 10.0, 3).unwrap();
        assert!(tree_vs_compact_check(&p, &PolicyId::PrivateMining, 500, 100, 3)
            .unwrap()
            .passed());
    }

    #[test]
    fn tree_states_reduce_to_compact_states() {
        let p = ProtocolParams::from_lambda_beta(1.0 / 600.0, 0.3, 10.0, 3).unwrap();
        for stream in 0..300 {
            let mut rng = StreamRng::for_stream(4, &[stream]);
            let mut tree = BlockTree::new(p.delta);
            let mut state = CompactState::genesis(p.delta);
            for _ in 0..60 {
                let elapsed = exponential(&mut rng, p.lambda());
                let arrival = if rng.random::<f64>() < p.beta() {
                    Arrival::A
                } else {
                    Arrival::H
                };
                state.advance_in_place(elapsed);
                let action = PolicyId::BaitAndSwitch.decide(&state, arrival);
                let parent = tree.parent_for(action).unwrap();
                state.apply_in_place(arrival, action).unwrap();
                tree.apply_in_place(&TreeEvent {
                    kind: arrival,
                    elapsed,
                    parent,
                    publish: vec![],
                })
                .unwrap();
                assert!(
                    tree.to_compact().approx_eq(&state, 1e-6),
                    "{} vs {}",
                    tree.to_compact(),
                    state
                );
                if state.is_violation(p.k) {
                    break;
                }
            }
        }
    }

    #[test]
    fn horizon_is_bounded() {
        let p = ProtocolParams::from_lambda_beta(1.0, 0.3, 0.0, 3).unwrap();
        assert!(tree_vs_compact_check(&p, &PolicyId::BaitAndSwitch, 1, 201, 0).is_err());
    }
}
