//! Violation probability of a general target block.

use super::height1::{e_pmf, epoch_matrix, Height1Engine, RacePmf, TransitionMatrix};
use crate::error::{Error, Result};
use crate::numerics::{convolve, default_quadrature, poisson_pmfs};
use crate::params::ProtocolParams;

/// Stationary age density of the highest jumper at the target's creation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeDensity {
    h: f64,
    delta: f64,
}

impl AgeDensity {
    /// `Δ + 1/h`.
    pub fn normalizer(&self) -> f64 {
        self.delta + 1.0 / self.h
    }

    pub fn pdf(&self, g: f64) -> f64 {
        if g < 0.0 {
            0.0
        } else if g <= self.delta {
            1.0 / self.normalizer()
        } else {
            (-self.h * (g - self.delta)).exp() / self.normalizer()
        }
    }

    /// Mass of `[0, Δ]`.
    pub fn window_mass(&self) -> f64 {
        self.delta / self.normalizer()
    }

    pub fn cdf(&self, g: f64) -> f64 {
        if g <= 0.0 {
            0.0
        } else if g <= self.delta {
            g / self.normalizer()
        } else {
            self.window_mass() + (1.0 - (-self.h * (g - self.delta)).exp()) / (self.h * self.normalizer())
        }
    }
}

pub fn age_density(params: &ProtocolParams) -> AgeDensity {
    AgeDensity {
        h: params.h,
        delta: params.delta,
    }
}

/// Lead right after a jumper: `s(0) = e(0) + e(1)`, `s(i) = e(i+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostJumperLeadPmf {
    coeffs: Vec<f64>,
}

impl PostJumperLeadPmf {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }
}

fn post_jumper_from_race(race: &RacePmf, max_i: usize) -> PostJumperLeadPmf {
    let mut coeffs: Vec<f64> = (0..=max_i).map(|i| race.get(i + 1)).collect();
    coeffs[0] += race.get(0);
    PostJumperLeadPmf { coeffs }
}

pub fn lead_after_jumper_pmf(params: &ProtocolParams, max_i: usize) -> Result<PostJumperLeadPmf> {
    let race = e_pmf(params, max_i + 1)?;
    Ok(post_jumper_from_race(&race, max_i))
}

/// `f3(n) = P(L_{t⁻} = n, target is a jumper)` and
/// `f4(n) = P(L_{t⁻} = n, target is not a jumper)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadJointPmf {
    f3: Vec<f64>,
    f4: Vec<f64>,
}

impl LeadJointPmf {
    pub fn f3(&self, n: usize) -> f64 {
        self.f3.get(n).copied().unwrap_or(0.0)
    }

    pub fn f4(&self, n: usize) -> f64 {
        self.f4.get(n).copied().unwrap_or(0.0)
    }

    pub fn max_n(&self) -> usize {
        self.f3.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.f3.iter().chain(&self.f4).sum()
    }

    /// `Σ f3(n)` over the stored range.
    pub fn jumper_mass(&self) -> f64 {
        self.f3.iter().sum()
    }
}

fn joint_from_lead(params: &ProtocolParams, s: &PostJumperLeadPmf, max_n: usize) -> LeadJointPmf {
    let (a, h, delta) = (params.a, params.h, params.delta);
    let lambda = params.lambda();
    let len = max_n + 1;
    let age = age_density(params);
    // ∫_0^∞ f1(ta; m) h e^{−ht} dt = (h/λ)(a/λ)^m
    let geo: Vec<f64> = (0..len).map(|m| h / lambda * (a / lambda).powi(m as i32)).collect();
    // ∫_Δ^∞ f1(ga; j) f_G(g) dg
    let tail: Vec<f64> = convolve(&poisson_pmfs(max_n, a * delta), &geo, len)
        .into_iter()
        .map(|x| x / (h * age.normalizer()))
        .collect();
    let mut jumper = convolve(&tail, &geo, len);
    let mut non_jumper = vec![0.0; len];
    for (g, wg) in default_quadrature().on(0.0, delta) {
        let before = poisson_pmfs(max_n, g * a);
        // ∫_0^∞ f1((t+Δ−g)a; m) h e^{−ht} dt
        let after = convolve(&poisson_pmfs(max_n, a * (delta - g)), &geo, len);
        let both = convolve(&before, &after, len);
        let stay = (-h * (delta - g)).exp();
        let weight = wg * age.pdf(g);
        for n in 0..len {
            jumper[n] += weight * stay * both[n];
            non_jumper[n] += weight * (1.0 - stay) * both[n];
        }
    }
    LeadJointPmf {
        f3: convolve(s.coeffs(), &jumper, len),
        f4: convolve(s.coeffs(), &non_jumper, len),
    }
}

pub fn lead_joint_pmf(params: &ProtocolParams, max_n: usize) -> Result<LeadJointPmf> {
    let s = lead_after_jumper_pmf(params, max_n)?;
    Ok(joint_from_lead(params, &s, max_n))
}

/// First-epoch matrix of the target attack for lead `l`: `P^{(1)}` with only
/// row `l` populated for a jumper target, `P′^{(2)}` with only row `l + 1`
/// populated otherwise.
pub fn first_epoch_matrices(params: &ProtocolParams, l: usize, jumper: bool) -> Result<TransitionMatrix> {
    let k = params.k as usize;
    if l >= k {
        return Err(Error::InvalidParameter(format!("lead {l} outside 0..{k}")));
    }
    let table = super::height1::WindowTable::new(params, k, 0);
    Ok(first_epoch(&table, k, l, jumper))
}

fn first_epoch(table: &super::height1::WindowTable, k: usize, l: usize, jumper: bool) -> TransitionMatrix {
    let (row, epoch) = if jumper { (l, 1) } else { (l + 1, 2) };
    let mut m = TransitionMatrix::zeros(k + 1, epoch);
    for y2 in row..k {
        m.set(row, y2, table.p(y2 - row, -(l as i64)));
    }
    m.close();
    m
}

/// `Σ_{i<k} e(i) Σ_{y=lo}^{k−1−i} v_y`.
fn no_violation_from(race: &RacePmf, v: &[f64], k: usize, lo: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..k {
        let hi = k - 1 - i;
        if hi < lo {
            break;
        }
        total += race.get(i) * v[lo..=hi].iter().sum::<f64>();
    }
    total
}

/// Shared tables for the target probability at every depth up to `k_max`.
#[derive(Debug, Clone)]
pub struct TargetEngine {
    height1: Height1Engine,
    joint: LeadJointPmf,
}

impl TargetEngine {
    pub fn new(params: &ProtocolParams, k_max: u32) -> Result<Self> {
        let height1 = Height1Engine::new(params, k_max)?;
        let max_n = height1.k_max() - 1;
        let s = post_jumper_from_race(height1.race(), max_n);
        let joint = joint_from_lead(params, &s, max_n);
        Ok(Self { height1, joint })
    }

    pub fn joint(&self) -> &LeadJointPmf {
        &self.joint
    }

    pub fn height1(&self) -> &Height1Engine {
        &self.height1
    }

    pub fn probability(&self, k: u32) -> Result<f64> {
        let kk = k as usize;
        if k == 0 || kk > self.height1.k_max() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside 1..={}",
                self.height1.k_max()
            )));
        }
        let params = self.height1.params();
        let table = self.height1.table();
        let race = self.height1.race();
        let later: Vec<TransitionMatrix> = (2..=k).map(|j| epoch_matrix(params, table, kk, j)).collect();
        let mut no_violation = 0.0;
        for l in 0..kk {
            let mut unit = vec![0.0; kk + 1];
            unit[l] = 1.0;
            let mut v = first_epoch(table, kk, l, true).left_mul(&unit);
            for m in &later {
                v = m.left_mul(&v);
            }
            no_violation += self.joint.f3(l) * no_violation_from(race, &v, kk, l);

            let mut unit = vec![0.0; kk + 1];
            unit[l + 1] = 1.0;
            let mut v = if kk >= 2 {
                first_epoch(table, kk, l, false).left_mul(&unit)
            } else {
                unit
            };
            for m in later.iter().skip(1) {
                v = m.left_mul(&v);
            }
            no_violation += self.joint.f4(l) * no_violation_from(race, &v, kk, l);
        }
        Ok((1.0 - no_violation).clamp(0.0, 1.0))
    }
}

/// Probability that the safety of a target block is violated.
pub fn violation_probability_target(params: &ProtocolParams) -> Result<f64> {
    TargetEngine::new(params, params.k)?.probability(params.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{p_w_given_l, violation_probability_height1};
    use crate::numerics::Quadrature;
    use approx::assert_relative_eq;

    fn bitcoin(beta: f64, k: u32) -> ProtocolParams {
        ProtocolParams::from_lambda_beta(1.0 / 600.0, beta, 10.0, k).unwrap()
    }

    fn geometric(p: &ProtocolParams, len: usize) -> Vec<f64> {
        let (ph, pa) = (p.h / p.lambda(), p.a / p.lambda());
        (0..len).map(|x| ph * pa.powi(x as i32)).collect()
    }

    #[test]
    fn age_density_closed_forms() {
        let p = bitcoin(0.25, 1);
        let f = age_density(&p);
        assert_relative_eq!(f.pdf(0.0), 1.0 / 810.0, max_relative = 1e-15);
        assert_relative_eq!(f.window_mass(), 10.0 / 810.0, max_relative = 1e-15);
        let total = Quadrature::new(200).integrate(0.0, 10.0, |g| f.pdf(g))
            + Quadrature::new(400).integrate(10.0, 10.0 + 60.0 * 800.0, |g| f.pdf(g));
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
        assert_relative_eq!(f.cdf(1e9), 1.0, max_relative = 1e-15);

        let z = age_density(&p.with_delta(0.0));
        assert_relative_eq!(z.pdf(3.0), p.h * (-p.h * 3.0).exp(), max_relative = 1e-15);
    }

    #[test]
    fn post_jumper_lead() {
        let none = ProtocolParams::new(0.0, 0.01, 10.0, 1).unwrap();
        assert_eq!(lead_after_jumper_pmf(&none, 5).unwrap().get(0), 1.0);
        let p = bitcoin(0.25, 1);
        let e = e_pmf(&p, 10).unwrap();
        let s = lead_after_jumper_pmf(&p, 9).unwrap();
        assert_relative_eq!(s.get(0), e.get(0) + e.get(1), max_relative = 1e-15);
        assert_eq!(s.get(3), e.get(4));
        let s = lead_after_jumper_pmf(&p, 400).unwrap();
        assert!((s.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn joint_without_adversary_or_delay() {
        let p = ProtocolParams::new(0.0, 0.01, 0.0, 1).unwrap();
        let j = lead_joint_pmf(&p, 5).unwrap();
        assert_eq!(j.f3(0), 1.0);
        assert!((1..=5).all(|n| j.f3(n) == 0.0));
        assert!((0..=5).all(|n| j.f4(n) == 0.0));
    }

    #[test]
    fn joint_normalizes() {
        for (lambda, delta) in [(1.0 / 600.0, 10.0), (1.0 / 13.0, 2.0)] {
            for beta in [0.1, 0.25, 0.4] {
                let p = ProtocolParams::from_lambda_beta(lambda, beta, delta, 1).unwrap();
                let j = lead_joint_pmf(&p, 400).unwrap();
                assert!((j.total() - 1.0).abs() < 1e-8, "{}", j.total());
            }
        }
    }

    #[test]
    fn no_late_target_without_delay() {
        let j = lead_joint_pmf(&bitcoin(0.25, 1).with_delta(0.0), 30).unwrap();
        assert!((0..=30).all(|n| j.f4(n) == 0.0));
    }

    /// Summing over the split of the lead makes the `g` integrals collapse to
    /// elementary weights.
    #[test]
    fn joint_matches_collapsed_form() {
        for (lambda, delta, beta) in [(1.0 / 600.0, 10.0, 0.25), (1.0 / 13.0, 2.0, 0.4), (0.5, 3.0, 0.15)] {
            let p = ProtocolParams::from_lambda_beta(lambda, beta, delta, 1).unwrap();
            let n = 40;
            let s = lead_after_jumper_pmf(&p, n - 1).unwrap();
            let geo = geometric(&p, n);
            let pg = convolve(&poisson_pmfs(n - 1, p.a * delta), &geo, n);
            let pgg = convolve(&pg, &geo, n);
            let hd = p.h * delta;
            let w1 = (1.0 - (-hd).exp()) / (hd + 1.0);
            let w2 = 1.0 / (hd + 1.0);
            let w3 = (hd - 1.0 + (-hd).exp()) / (hd + 1.0);
            let jm: Vec<f64> = (0..n).map(|i| w1 * pg[i] + w2 * pgg[i]).collect();
            let nj: Vec<f64> = pg.iter().map(|x| w3 * x).collect();
            let f3 = convolve(s.coeffs(), &jm, n);
            let f4 = convolve(s.coeffs(), &nj, n);
            let j = lead_joint_pmf(&p, n - 1).unwrap();
            for i in 0..n {
                assert!((j.f3(i) - f3[i]).abs() < 1e-14, "f3({i})");
                assert!((j.f4(i) - f4[i]).abs() < 1e-14, "f4({i})");
            }
        }
    }

    #[test]
    fn first_epoch_examples() {
        let none = ProtocolParams::new(0.0, 0.01, 0.0, 4).unwrap();
        let m = first_epoch_matrices(&none, 0, true).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);

        let p = bitcoin(0.25, 4);
        for l in 0..4 {
            for jumper in [true, false] {
                let m = first_epoch_matrices(&p, l, jumper).unwrap();
                for s in m.row_sums() {
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
        let m = first_epoch_matrices(&p, 1, true).unwrap();
        assert_relative_eq!(m.get(1, 1), (-p.a * 10.0).exp(), max_relative = 1e-15);
        assert_relative_eq!(m.get(1, 1), p_w_given_l(&p, 0, -1), max_relative = 1e-15);
        let m = first_epoch_matrices(&p, 1, false).unwrap();
        assert_eq!(m.epoch(), 2);
        assert_relative_eq!(m.get(2, 3), p_w_given_l(&p, 1, -1), max_relative = 1e-15);
        assert!(first_epoch_matrices(&p, 4, true).is_err());
    }

    #[test]
    fn zero_without_adversary_or_delay() {
        for k in 1..=5 {
            let p = ProtocolParams::new(0.0, 0.01, 0.0, k).unwrap();
            assert_eq!(violation_probability_target(&p).unwrap(), 0.0);
        }
    }

    /// With `a = 0` a jumper target needs an H-arrival in each of `k`
    /// windows, a non-jumper target in `k − 1`.
    #[test]
    fn honest_forks_alone() {
        for k in 1..=5 {
            let p = ProtocolParams::new(0.0, 0.01, 10.0, k).unwrap();
            let hd = p.h * p.delta;
            let q = 1.0 - (-hd).exp();
            let jumper = (2.0 - (-hd).exp()) / (hd + 1.0);
            let expected = jumper * q.powi(k as i32) + (1.0 - jumper) * q.powi(k as i32 - 1);
            assert!((violation_probability_target(&p).unwrap() - expected).abs() < 1e-14);
        }
    }

    /// Without delay every target is a jumper, the lead is `s ⊛ Geo ⊛ Geo`,
    /// and each later epoch adds a geometric number of A-blocks.
    #[test]
    fn zero_delay_matches_convolution() {
        for beta in [0.1, 0.25, 0.4] {
            for k in 1..=5u32 {
                let p = bitcoin(beta, k).with_delta(0.0);
                let n = k as usize;
                let rho = p.a / p.h;
                let e: Vec<f64> = (0..=n + 1).map(|i| (1.0 - rho) * rho.powi(i as i32)).collect();
                let mut s: Vec<f64> = e[1..].to_vec();
                s[0] += e[0];
                let geo = geometric(&p, n);
                let mut total = convolve(&convolve(&s, &geo, n), &geo, n);
                for _ in 1..k {
                    total = convolve(&total, &geo, n);
                }
                let below: f64 = convolve(&total, &e, n).iter().sum();
                let exact = violation_probability_target(&p).unwrap();
                assert_relative_eq!(exact, 1.0 - below, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn decreasing_in_depth() {
        for beta in [0.1, 0.25] {
            let engine = TargetEngine::new(&bitcoin(beta, 12), 12).unwrap();
            let probs: Vec<f64> = (1..=12).map(|k| engine.probability(k).unwrap()).collect();
            assert!(probs.windows(2).all(|w| w[1] < w[0]), "{probs:?}");
        }
    }

    #[test]
    fn pre_mining_helps_the_adversary() {
        for k in 1..=8 {
            let p = bitcoin(0.25, k);
            let target = violation_probability_target(&p).unwrap();
            let first = violation_probability_height1(&p).unwrap();
            assert!(target >= first, "k {k}: {target} < {first}");
        }
    }
}
