//! Violation of a general target block.

use rand::Rng;
use serde::Serialize;

use super::{
    count_depths, count_hits, curve_estimates, exponential, geometric, poisson, run_attack, run_attack_curve,
    EstimateWithCI, RunConfig, StreamRng,
};
use super::{TAG_TARGET, TAG_WARM};
use crate::error::Result;
use crate::model::CompactState;
use crate::params::ProtocolParams;
use crate::policy::{non_jumper_arrival_state, place_target};

/// Warm-up stops once the backward walk is this far below its maximum.
const WARM_MARGIN: i64 = 60;

/// Lead right after a jumper, from the backward Lindley recursion over at
/// most `warmup` jumper cycles of run `run`.
///
/// Cycle `j` counts back from the present and has its own stream, so longer
/// warm-ups extend the same sample path.
pub fn sample_post_jumper_lead(params: &ProtocolParams, seed: u64, run: u64, warmup: u32) -> u32 {
    let ad = params.a * params.delta;
    let p_h = params.h / params.lambda();
    let mut walk = 0i64;
    let mut best = 0i64;
    for j in 0..warmup as u64 {
        let mut rng = StreamRng::for_stream(seed, &[TAG_WARM, run, j]);
        let arrivals = poisson(&mut rng, ad) + geometric(&mut rng, p_h);
        walk += arrivals as i64 - 1;
        best = best.max(walk);
        if walk <= best - WARM_MARGIN {
            break;
        }
    }
    best as u32
}

/// Target violation estimate together with the observed jumper fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetEstimate {
    pub violation: EstimateWithCI,
    /// Fraction of runs whose target block is a jumper.
    pub jumper: EstimateWithCI,
}

/// Age of the highest jumper when the target is requested, and the wait
/// until the first H-block after the request.
fn draw_request<R: Rng + ?Sized>(rng: &mut R, h: f64, delta: f64) -> (f64, f64) {
    let age = if rng.random::<f64>() < delta / (delta + 1.0 / h) {
        delta * rng.random::<f64>()
    } else {
        delta + exponential(rng, h)
    };
    (age, exponential(rng, h))
}

/// Start state of run `run` and the generator that continues its stream.
fn target_start(config: &RunConfig, run: u64) -> Result<(CompactState, StreamRng)> {
    let params = &config.params;
    let (h, delta) = (params.h, params.delta);
    let lead = sample_post_jumper_lead(params, config.seed, run, config.warmup);
    let mut rng = StreamRng::for_stream(config.seed, &[TAG_TARGET, run]);
    let (age, wait) = draw_request(&mut rng, h, delta);
    let lead = lead + poisson(&mut rng, params.a * (age + wait)) as u32;
    let start = if age + wait >= delta {
        place_target(lead, age >= delta, true, delta)?
    } else {
        non_jumper_arrival_state(lead, delta - age - wait, delta)?
    };
    Ok((start, rng))
}

fn run_target(config: &RunConfig, run: u64) -> Result<bool> {
    let (start, mut rng) = target_start(config, run)?;
    run_attack(
        start,
        &config.params,
        &config.policy,
        config.cutoff,
        config.max_events,
        &mut rng,
    )
}

/// Estimates the violation probability of a target block and the fraction
/// of jumper targets.
pub fn simulate_target_detail(config: &RunConfig) -> Result<TargetEstimate> {
    config.validate()?;
    let violations = count_hits(config.runs, config.execution, |r| run_target(config, r))?;
    let jumpers = count_hits(config.runs, config.execution, |r| {
        let mut rng = StreamRng::for_stream(config.seed, &[TAG_TARGET, r]);
        let (age, wait) = draw_request(&mut rng, config.params.h, config.params.delta);
        Ok(age + wait >= config.params.delta)
    })?;
    Ok(TargetEstimate {
        violation: EstimateWithCI::from_counts(violations, config.runs, config.seed, config.bias_bound()),
        jumper: EstimateWithCI::from_counts(jumpers, config.runs, config.seed, 0.0),
    })
}

/// Estimates the violation probability of a target block under the target
/// bait-and-switch attack (or `config.policy`).
pub fn simulate_target_violation(config: &RunConfig) -> Result<EstimateWithCI> {
    config.validate()?;
    let hits = count_hits(config.runs, config.execution, |r| run_target(config, r))?;
    Ok(EstimateWithCI::from_counts(
        hits,
        config.runs,
        config.seed,
        config.bias_bound(),
    ))
}

/// Target estimates for every depth `1..=config.params.k` from shared
/// sample paths.
pub fn simulate_target_curve(config: &RunConfig) -> Result<Vec<EstimateWithCI>> {
    config.validate()?;
    let k_max = config.params.k;
    let counts = count_depths(config.runs, k_max, config.execution, |r| {
        let (start, mut rng) = target_start(config, r)?;
        run_attack_curve(
            start,
            &config.params,
            k_max,
            &config.policy,
            config.cutoff,
            config.max_events,
            &mut rng,
        )
    })?;
    Ok(curve_estimates(config, &counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{lead_after_jumper_pmf, lead_joint_pmf, violation_probability_target};
    use crate::montecarlo::Execution;
    use crate::policy::PolicyId;

    fn bitcoin(beta: f64, k: u32) -> ProtocolParams {
        ProtocolParams::from_lambda_beta(1.0 / 600.0, beta, 10.0, k).unwrap()
    }

    #[test]
    fn post_jumper_lead_matches_series() {
        let p = bitcoin(0.25, 1);
        let runs = 100_000u64;
        let s = lead_after_jumper_pmf(&p, 20).unwrap();
        let mut counts = [0u64; 6];
        for r in 0..runs {
            let l = sample_post_jumper_lead(&p, 8, r, 10_000) as usize;
            if l < counts.len() {
                counts[l] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let exact = s.get(i);
            let se = (exact * (1.0 - exact) / runs as f64).sqrt();
            assert!((c as f64 / runs as f64 - exact).abs() <= 4.0 * se, "s({i})");
        }
    }

    #[test]
    fn backward_warmup_matches_forward_recursion() {
        // Forward Lindley iteration from zero, long enough to forget the start.
        let p = bitcoin(0.25, 1);
        let runs = 50_000u64;
        let mut forward = [0u64; 4];
        let mut backward = [0u64; 4];
        for r in 0..runs {
            let mut rng = StreamRng::for_stream(77, &[r]);
            let mut lead = 0i64;
            for _ in 0..200 {
                let x = poisson(&mut rng, p.a * p.delta) + geometric(&mut rng, p.h / p.lambda());
                lead = (lead + x as i64 - 1).max(0);
            }
            if (lead as usize) < forward.len() {
                forward[lead as usize] += 1;
            }
            let b = sample_post_jumper_lead(&p, 78, r, 10_000) as usize;
            if b < backward.len() {
                backward[b] += 1;
            }
        }
        for i in 0..4 {
            let (f, b) = (forward[i] as f64 / runs as f64, backward[i] as f64 / runs as f64);
            let se = (f * (1.0 - f) / runs as f64).sqrt() * 2f64.sqrt();
            assert!((f - b).abs() <= 4.0 * se.max(1e-4), "lead {i}: {f} vs {b}");
        }
    }

    #[test]
    fn jumper_fraction_matches_joint_pmf() {
        let p = bitcoin(0.25, 3);
        let est = simulate_target_detail(&RunConfig::new(p, PolicyId::TargetBaitAndSwitch, 100_000, 5)).unwrap();
        let mass = lead_joint_pmf(&p, 200).unwrap().jumper_mass();
        assert!(est.jumper.agrees_with(mass, 4.0), "{:?} vs {mass}", est.jumper);
    }

    #[test]
    fn agrees_with_analytic_target() {
        let p = bitcoin(0.1, 4);
        let exact = violation_probability_target(&p).unwrap();
        let est = simulate_target_violation(&RunConfig::new(p, PolicyId::TargetBaitAndSwitch, 100_000, 6)).unwrap();
        assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
    }

    #[test]
    fn curve_matches_single_depth_runs() {
        let p = bitcoin(0.25, 4);
        let curve = simulate_target_curve(&RunConfig::new(p, PolicyId::TargetBaitAndSwitch, 10_000, 13)).unwrap();
        for k in 1..=4 {
            let cfg = RunConfig::new(p.with_k(k), PolicyId::TargetBaitAndSwitch, 10_000, 13);
            assert_eq!(
                curve[k as usize - 1].hits,
                simulate_target_violation(&cfg).unwrap().hits,
                "k {k}"
            );
        }
    }

    #[test]
    fn no_adversary_cases() {
        let p = ProtocolParams::new(0.0, 1.0, 0.0, 2).unwrap();
        let est = simulate_target_violation(&RunConfig::new(p, PolicyId::TargetBaitAndSwitch, 10_000, 1)).unwrap();
        assert_eq!(est.estimate, 0.0);
        let p = ProtocolParams::new(0.0, 0.1, 10.0, 2).unwrap();
        let exact = violation_probability_target(&p).unwrap();
        let est = simulate_target_violation(&RunConfig::new(p, PolicyId::TargetBaitAndSwitch, 100_000, 2)).unwrap();
        assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
    }

    #[test]
    fn doubling_warmup_keeps_the_sample_path() {
        let p = bitcoin(0.25, 2);
        let mut cfg = RunConfig::new(p, PolicyId::TargetBaitAndSwitch, 5_000, 9);
        let a = simulate_target_violation(&cfg).unwrap();
        cfg.warmup *= 2;
        cfg.execution = Execution::Serial;
        let b = simulate_target_violation(&cfg).unwrap();
        assert!((a.estimate - b.estimate).abs() <= a.stderr);
    }
}
