//! Seeded continuous-time simulators used as statistical oracles.
//!
//! Every run draws from its own [`StreamRng`] keyed by `(seed, tag, run)`, and
//! batches reduce integer counts, so serial and parallel execution give
//! identical estimates.

mod histograms;
mod rng;
mod target;
mod tree_check;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::race_tail_ratio;
use crate::error::{Error, Result};
use crate::model::{Arrival, CompactState};
use crate::params::ProtocolParams;
use crate::policy::{Policy, PolicyId};

pub use histograms::{estimate_m_pmf, estimate_w_given_l, EmpiricalPmf};
pub use rng::{StreamRng, TAG_HIST, TAG_RUN, TAG_TARGET, TAG_TREE, TAG_WARM};
pub use target::{
    sample_post_jumper_lead, simulate_target_curve, simulate_target_detail, simulate_target_violation, TargetEstimate,
};
pub use tree_check::{tree_vs_compact_check, TreeCheckReport};

/// Default deficit cutoff beyond `k`.
pub const DEFAULT_CUTOFF_MARGIN: u32 = 60;
/// Default number of warm-up jumper cycles for the target lead.
pub const DEFAULT_WARMUP: u32 = 10_000;
/// Default per-run event cap.
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

/// A Bernoulli estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub stderr: f64,
    pub runs: u64,
    pub hits: u64,
    pub seed: u64,
    /// Upper bound on the bias from truncating runs.
    pub bias_bound: f64,
}

impl EstimateWithCI {
    pub fn from_counts(hits: u64, runs: u64, seed: u64, bias_bound: f64) -> Self {
        let p = hits as f64 / runs as f64;
        Self {
            estimate: p,
            stderr: (p * (1.0 - p) / runs as f64).sqrt(),
            runs,
            hits,
            seed,
            bias_bound,
        }
    }

    /// `|estimate − x| ≤ z · SE`.
    pub fn agrees_with(&self, x: f64, z: f64) -> bool {
        (self.estimate - x).abs() <= z * self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Settings of a simulation batch.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ProtocolParams,
    pub policy: PolicyId,
    pub runs: u64,
    pub seed: u64,
    /// A run ends without violation once `max(k, P) − m` reaches this value.
    pub cutoff: u32,
    /// Warm-up jumper cycles for the target lead.
    pub warmup: u32,
    pub max_events: u64,
    pub execution: Execution,
}

impl RunConfig {
    pub fn new(params: ProtocolParams, policy: PolicyId, runs: u64, seed: u64) -> Self {
        Self {
            params,
            policy,
            runs,
            seed,
            cutoff: params.k + DEFAULT_CUTOFF_MARGIN,
            warmup: DEFAULT_WARMUP,
            max_events: DEFAULT_MAX_EVENTS,
            execution: Execution::Parallel,
        }
    }

    fn validate(&self) -> Result<()> {
        self.params.require_tolerance()?;
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.cutoff < self.params.k {
            return Err(Error::InvalidParameter(format!(
                "cutoff {} is below k = {}",
                self.cutoff, self.params.k
            )));
        }
        Ok(())
    }

    /// `ρ^{B−k}`.
    pub fn bias_bound(&self) -> f64 {
        race_tail_ratio(&self.params).powi((self.cutoff - self.params.k) as i32)
    }
}

pub(crate) fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    let x: f64 = d.sample(rng);
    x as u64
}

/// Failures before the first success with success probability `p`.
pub(crate) fn geometric<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    Geometric::new(p).expect("success probability in (0, 1]").sample(rng)
}

/// Counts runs returning `true`, in parallel or serially.
pub(crate) fn count_hits<F>(runs: u64, execution: Execution, run: F) -> Result<u64>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    match execution {
        Execution::Serial => {
            let mut hits = 0;
            for r in 0..runs {
                hits += run(r)? as u64;
            }
            Ok(hits)
        }
        Execution::Parallel => (0..runs)
            .into_par_iter()
            .map(|r| run(r).map(u64::from))
            .try_reduce(|| 0, |x, y| Ok(x + y)),
    }
}

/// Runs the attack from `state` until violation (`true`) or until the lower
/// branch falls `cutoff` heights below `max(k, P)` (`false`).
pub(crate) fn run_attack<R: Rng + ?Sized>(
    mut state: CompactState,
    params: &ProtocolParams,
    policy: &dyn Policy,
    cutoff: u32,
    max_events: u64,
    rng: &mut R,
) -> Result<bool> {
    let k = params.k;
    let lambda = params.lambda();
    let beta = params.beta();
    for _ in 0..max_events {
        if state.is_violation(k) {
            return Ok(true);
        }
        if k.max(state.public_height()).saturating_sub(state.m()) >= cutoff {
            return Ok(false);
        }
        state.advance_in_place(exponential(rng, lambda));
        let arrival = if rng.random::<f64>() < beta {
            Arrival::A
        } else {
            Arrival::H
        };
        let action = policy.decide(&state, arrival);
        state.apply_in_place(arrival, action)?;
    }
    Err(Error::Numerical(format!(
        "run exceeded {max_events} events in state {state}"
    )))
}

/// Runs the attack from `state` for every depth `1..=k_max` at once and
/// returns the largest depth whose safety is violated (0 if none).
///
/// Policies never consult `k`, so one sample path serves all depths. A run
/// stops once depth `k_max` is violated or the lower branch falls `cutoff`
/// heights below `max(k_max, P)`.
pub(crate) fn run_attack_curve<R: Rng + ?Sized>(
    mut state: CompactState,
    params: &ProtocolParams,
    k_max: u32,
    policy: &dyn Policy,
    cutoff: u32,
    max_events: u64,
    rng: &mut R,
) -> Result<u32> {
    let lambda = params.lambda();
    let beta = params.beta();
    let mut deepest = 0;
    for _ in 0..max_events {
        if state.m() >= state.public_height() {
            deepest = deepest.max(state.m().min(k_max));
        }
        if deepest == k_max || k_max.max(state.public_height()).saturating_sub(state.m()) >= cutoff {
            return Ok(deepest);
        }
        state.advance_in_place(exponential(rng, lambda));
        let arrival = if rng.random::<f64>() < beta {
            Arrival::A
        } else {
            Arrival::H
        };
        let action = policy.decide(&state, arrival);
        state.apply_in_place(arrival, action)?;
    }
    Err(Error::Numerical(format!(
        "run exceeded {max_events} events in state {state}"
    )))
}

/// Counts, for each depth `1..=k_max`, the runs whose deepest violated depth
/// reaches it.
pub(crate) fn count_depths<F>(runs: u64, k_max: u32, execution: Execution, run: F) -> Result<Vec<u64>>
where
    F: Fn(u64) -> Result<u32> + Sync,
{
    let add = |mut acc: Vec<u64>, deepest: u32| {
        for slot in acc.iter_mut().take(deepest as usize) {
            *slot += 1;
        }
        acc
    };
    let zero = || vec![0u64; k_max as usize];
    match execution {
        Execution::Serial => {
            let mut acc = zero();
            for r in 0..runs {
                acc = add(acc, run(r)?);
            }
            Ok(acc)
        }
        Execution::Parallel => (0..runs)
            .into_par_iter()
            .map(|r| run(r).map(|d| add(zero(), d)))
            .try_reduce(zero, |x, y| Ok(x.iter().zip(&y).map(|(a, b)| a + b).collect())),
    }
}

/// Height-1 estimates for every depth `1..=config.params.k` from shared
/// sample paths. Entry `k − 1` matches [`simulate_violation`] at depth `k`
/// run by run, except for runs that would violate only after the single-depth
/// cutoff.
pub fn simulate_violation_curve(config: &RunConfig) -> Result<Vec<EstimateWithCI>> {
    config.validate()?;
    let params = config.params;
    let counts = count_depths(config.runs, params.k, config.execution, |r| {
        let mut rng = StreamRng::for_stream(config.seed, &[TAG_RUN, r]);
        run_attack_curve(
            CompactState::genesis(params.delta),
            &params,
            params.k,
            &config.policy,
            config.cutoff,
            config.max_events,
            &mut rng,
        )
    })?;
    Ok(curve_estimates(config, &counts))
}

pub(crate) fn curve_estimates(config: &RunConfig, counts: &[u64]) -> Vec<EstimateWithCI> {
    let rho = race_tail_ratio(&config.params);
    counts
        .iter()
        .enumerate()
        .map(|(i, &hits)| {
            let k = i as u32 + 1;
            let bias = rho.powi((config.cutoff - k) as i32);
            EstimateWithCI::from_counts(hits, config.runs, config.seed, bias)
        })
        .collect()
}

/// Estimates the height-1 violation probability under `config.policy`.
pub fn simulate_violation(config: &RunConfig) -> Result<EstimateWithCI> {
    config.validate()?;
    let params = config.params;
    let hits = count_hits(config.runs, config.execution, |r| {
        let mut rng = StreamRng::for_stream(config.seed, &[TAG_RUN, r]);
        run_attack(
            CompactState::genesis(params.delta),
            &params,
            &config.policy,
            config.cutoff,
            config.max_events,
            &mut rng,
        )
    })?;
    Ok(EstimateWithCI::from_counts(
        hits,
        config.runs,
        config.seed,
        config.bias_bound(),
    ))
}
