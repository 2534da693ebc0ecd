//! Violation probability as a function of the confirmation depth.

use serde::Serialize;

use crate::analytic::{Height1Engine, TargetEngine};
use crate::error::{Error, Result};
use crate::params::ProtocolParams;

/// Which block's safety is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TargetMode {
    Height1,
    General,
}

impl TargetMode {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "height1" => Ok(Self::Height1),
            "general" => Ok(Self::General),
            other => Err(Error::InvalidParameter(format!(
                "unknown target mode {other:?}; expected height1 or general"
            ))),
        }
    }
}

/// One point of the trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub k: u32,
    pub probability: f64,
    /// Race pmf mass left out of the truncated series.
    pub e_tail_bound: f64,
    /// Largest pre-mining lead summed over (general target only).
    pub lead_truncation: Option<u32>,
}

/// Probabilities for `k = 1..=k_max`.
pub fn tradeoff(params: &ProtocolParams, k_max: u32, mode: TargetMode) -> Result<Vec<TradeoffRow>> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k-max must be at least 1".into()));
    }
    let params = params.with_k(k_max);
    match mode {
        TargetMode::Height1 => {
            let engine = Height1Engine::new(&params, k_max)?;
            let tail = engine.race().tail_bound();
            (1..=k_max)
                .map(|k| {
                    Ok(TradeoffRow {
                        k,
                        probability: engine.probability(k)?,
                        e_tail_bound: tail,
                        lead_truncation: None,
                    })
                })
                .collect()
        }
        TargetMode::General => {
            let engine = TargetEngine::new(&params, k_max)?;
            let tail = engine.height1().race().tail_bound();
            (1..=k_max)
                .map(|k| {
                    Ok(TradeoffRow {
                        k,
                        probability: engine.probability(k)?,
                        e_tail_bound: tail,
                        lead_truncation: Some(k - 1),
                    })
                })
                .collect()
        }
    }
}
