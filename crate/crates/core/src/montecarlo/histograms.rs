//! Empirical pmfs of the race supremum and the window increment.

use rand::Rng;
use serde::Serialize;

use super::{exponential, poisson, StreamRng, TAG_HIST};
use crate::error::{Error, Result};
use crate::params::ProtocolParams;

/// Histogram of a nonnegative integer variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPmf {
    pub counts: Vec<u64>,
    pub runs: u64,
}

impl EmpiricalPmf {
    fn from_samples(samples: impl IntoIterator<Item = usize>, runs: u64) -> Self {
        let mut counts = Vec::new();
        for x in samples {
            if x >= counts.len() {
                counts.resize(x + 1, 0);
            }
            counts[x] += 1;
        }
        Self { counts, runs }
    }

    pub fn p(&self, i: usize) -> f64 {
        self.counts.get(i).copied().unwrap_or(0) as f64 / self.runs as f64
    }

    pub fn stderr(&self, i: usize) -> f64 {
        let p = self.p(i);
        (p * (1.0 - p) / self.runs as f64).sqrt()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.runs as f64
    }
}

/// Histogram of `M = sup (A_t − J_t)`, stopping each run once the walk sits
/// `cutoff` below its running maximum.
pub fn estimate_m_pmf(params: &ProtocolParams, runs: u64, cutoff: u32, seed: u64) -> Result<EmpiricalPmf> {
    params.require_tolerance()?;
    if runs == 0 || cutoff == 0 {
        return Err(Error::InvalidParameter("runs and cutoff must be positive".into()));
    }
    let samples = (0..runs).map(|r| {
        let mut rng = StreamRng::for_stream(seed, &[TAG_HIST, 0, r]);
        let mut diff = 0i64;
        let mut best = 0i64;
        while diff > best - cutoff as i64 {
            let gap = params.delta + exponential(&mut rng, params.h);
            diff += poisson(&mut rng, params.a * gap) as i64;
            best = best.max(diff);
            diff -= 1;
        }
        best as usize
    });
    Ok(EmpiricalPmf::from_samples(samples, runs))
}

/// Histogram of the adversarial height increment over one Δ-window when the
/// public height exceeds the adversarial branch by `l` at the window start.
///
/// An A-arrival always extends the adversarial branch. An H-arrival extends
/// it only while it is exactly as high as the public height.
pub fn estimate_w_given_l(params: &ProtocolParams, l: i64, runs: u64, seed: u64) -> Result<EmpiricalPmf> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be positive".into()));
    }
    let lambda = params.lambda();
    let beta = params.beta();
    let samples = (0..runs).map(|r| {
        let mut rng = StreamRng::for_stream(seed, &[TAG_HIST, 1, l as u64, r]);
        let mut gap = l;
        let mut w = 0usize;
        let mut t = exponential(&mut rng, lambda);
        while t < params.delta {
            let is_a = rng.random::<f64>() < beta;
            if is_a || gap == 0 {
                w += 1;
                gap -= 1;
            }
            t += exponential(&mut rng, lambda);
        }
        w
    });
    Ok(EmpiricalPmf::from_samples(samples, runs))
}
