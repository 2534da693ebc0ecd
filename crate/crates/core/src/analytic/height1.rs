//! Violation probability of height 1.

use crate::error::{Error, Result};
use crate::numerics::{compensated_sum, default_quadrature, erlang_pdf, poisson_pmfs, series_div, Quadrature};
use crate::params::ProtocolParams;

/// Extra series terms computed beyond the requested order.
const GUARD_TERMS: usize = 8;
/// Terms of `e^{-aΔ r}` kept past the last needed coefficient.
const EXP_EXTRA_TERMS: usize = 64;
/// Coefficients more negative than this signal a failed expansion.
const NEGATIVE_TOL: f64 = 1e-12;

/// The pmf `e(i)` of the race supremum `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RacePmf {
    coeffs: Vec<f64>,
    tail_ratio: f64,
}

impl RacePmf {
    /// `e(0..=max_i)`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `e(i)`, zero past the truncation index.
    pub fn get(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn max_i(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `Σ e(i)` with compensated summation.
    pub fn sum(&self) -> f64 {
        compensated_sum(&self.coeffs)
    }

    /// `1 − Σ e(i)` over the stored coefficients, floored at zero.
    pub fn tail_bound(&self) -> f64 {
        (1.0 - self.sum()).max(0.0)
    }

    /// Asymptotic ratio `ρ = lim e(i+1)/e(i)`; zero when `a = 0`.
    pub fn tail_ratio(&self) -> f64 {
        self.tail_ratio
    }
}

/// Maclaurin coefficients `e(0..=max_i)` of the race generating function.
///
/// The common factor `1 − r` of numerator and denominator is cancelled
/// before dividing, which keeps the recurrence well conditioned.
pub fn e_pmf(params: &ProtocolParams, max_i: usize) -> Result<RacePmf> {
    params.require_tolerance()?;
    let (a, h) = (params.a, params.h);
    let ad = a * params.delta;
    let len = max_i + 1 + GUARD_TERMS;

    // E_q = e^{aΔ} (−aΔ)^q / q!, coefficients of e^{(1−r)aΔ}.
    let q_max = len + EXP_EXTRA_TERMS;
    let mut exp_terms = Vec::with_capacity(q_max + 1);
    let mut term = ad.exp();
    exp_terms.push(term);
    for q in 1..=q_max {
        term *= -ad / q as f64;
        exp_terms.push(term);
    }
    // T_i = Σ_{q ≥ i} E_q, summed from the small end; T_0 = 1.
    let mut tails = vec![0.0; q_max + 2];
    for q in (0..=q_max).rev() {
        tails[q] = tails[q + 1] + exp_terms[q];
    }
    tails[0] = 1.0;

    let mut den = Vec::with_capacity(len);
    den.push(h);
    for i in 1..len {
        den.push((h + a) * tails[i] - a * tails[i - 1]);
    }
    let c = h - a - h * a * params.delta;
    let mut coeffs = series_div(&[c], &den, len);
    coeffs.truncate(max_i + 1);
    for (i, x) in coeffs.iter_mut().enumerate() {
        if *x < -NEGATIVE_TOL {
            return Err(Error::Numerical(format!(
                "race pmf coefficient e({i}) = {x:e} is negative; the series expansion is unstable"
            )));
        }
        *x = x.max(0.0);
    }
    Ok(RacePmf {
        coeffs,
        tail_ratio: race_tail_ratio(params),
    })
}

/// `ρ = lim e(i+1)/e(i) = 1/r*`, where `r* > 1` is the pole of the race generating function, i.e.
/// the root of `r (h + a − a r) e^{(1−r)aΔ} = h`.
pub fn race_tail_ratio(params: &ProtocolParams) -> f64 {
    let (a, h) = (params.a, params.h);
    if a == 0.0 {
        return 0.0;
    }
    let g = |r: f64| r * (h + a - a * r) * ((1.0 - r) * a * params.delta).exp();
    let (mut lo, mut hi) = (1.0, (h + a) / a);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    1.0 / (0.5 * (lo + hi))
}

/// `P(M ≥ deficit)`.
pub fn m_tail(params: &ProtocolParams, deficit: usize) -> Result<f64> {
    if deficit == 0 {
        return Ok(1.0);
    }
    if params.a == 0.0 {
        params.require_tolerance()?;
        return Ok(0.0);
    }
    let pmf = e_pmf(params, deficit + 400)?;
    let rho = pmf.tail_ratio();
    let direct: f64 = pmf.coeffs()[deficit..].iter().sum();
    let extrapolated = pmf.get(pmf.max_i()) * rho / (1.0 - rho);
    Ok((direct + extrapolated).min(1.0))
}

/// Values of `P_{W|L}(w | l)` for `0 ≤ w ≤ w_max` and `l ≤ l_max`.
#[derive(Debug, Clone)]
pub struct WindowTable {
    w_max: usize,
    /// `l < 0`: Poisson(aΔ).
    negative: Vec<f64>,
    /// `l = 0`.
    zero: Vec<f64>,
    /// `l = 1..=l_max`.
    positive: Vec<Vec<f64>>,
}

impl WindowTable {
    pub fn new(params: &ProtocolParams, w_max: usize, l_max: usize) -> Self {
        Self::with_quadrature(params, w_max, l_max, default_quadrature())
    }

    pub fn with_quadrature(params: &ProtocolParams, w_max: usize, l_max: usize, quad: &Quadrature) -> Self {
        let (a, lambda, delta) = (params.a, params.lambda(), params.delta);
        let negative = poisson_pmfs(w_max, a * delta);

        // G(t, q) = ∫_0^{Δ−t} λ e^{−λs} f1(q; a(Δ−t−s)) ds
        let inner = |t: f64| -> Vec<f64> {
            let mut g = vec![0.0; w_max + 1];
            for (s, ws) in quad.on(0.0, delta - t) {
                let weight = ws * lambda * (-lambda * s).exp();
                let pmf = poisson_pmfs(w_max, a * (delta - t - s));
                for (gq, p) in g.iter_mut().zip(pmf) {
                    *gq += weight * p;
                }
            }
            g
        };

        let g0 = inner(0.0);
        let mut zero = vec![0.0; w_max + 1];
        zero[0] = (-lambda * delta).exp();
        zero[1..].copy_from_slice(&g0[..w_max]);

        let outer: Vec<(f64, f64, Vec<f64>)> = if l_max > 0 {
            quad.on(0.0, delta).map(|(t, wt)| (t, wt, inner(t))).collect()
        } else {
            Vec::new()
        };
        let mut positive = Vec::with_capacity(l_max);
        for l in 1..=l_max {
            let mut row = vec![0.0; w_max + 1];
            let lim = l.min(w_max + 1);
            row[..lim].copy_from_slice(&negative[..lim]);
            for (t, wt, g) in &outer {
                let f2 = wt * erlang_pdf(*t, l as u64, a);
                if f2 == 0.0 {
                    continue;
                }
                if l <= w_max {
                    row[l] += f2 * (-lambda * (delta - t)).exp();
                }
                for w in l + 1..=w_max {
                    row[w] += f2 * g[w - l - 1];
                }
            }
            positive.push(row);
        }
        Self {
            w_max,
            negative,
            zero,
            positive,
        }
    }

    pub fn w_max(&self) -> usize {
        self.w_max
    }

    pub fn l_max(&self) -> usize {
        self.positive.len()
    }

    /// `P_{W|L}(w | l)`.
    ///
    /// # Panics
    /// If `w > w_max` or `l > l_max`.
    pub fn p(&self, w: usize, l: i64) -> f64 {
        assert!(w <= self.w_max, "w = {w} beyond table size {}", self.w_max);
        match l {
            l if l < 0 => self.negative[w],
            0 => self.zero[w],
            l => self.positive[(l - 1) as usize][w],
        }
    }
}

/// `P_{W|L}(w | l)` for a single pair.
pub fn p_w_given_l(params: &ProtocolParams, w: usize, l: i64) -> f64 {
    WindowTable::new(params, w, l.max(0) as usize).p(w, l)
}

/// A `(k+1) × (k+1)` row-stochastic matrix for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    dim: usize,
    epoch: u32,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn zeros(dim: usize, epoch: u32) -> Self {
        Self {
            dim,
            epoch,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, 0);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn get(&self, y: usize, y2: usize) -> f64 {
        self.data[y * self.dim + y2]
    }

    pub fn set(&mut self, y: usize, y2: usize, v: f64) {
        self.data[y * self.dim + y2] = v;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.dim..(y + 1) * self.dim]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|y| self.row(y).iter().sum()).collect()
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (y, &vy) in v.iter().enumerate() {
            if vy == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(y)) {
                *o += vy * p;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.dim, other.epoch);
        for y in 0..self.dim {
            let row = other.left_mul(self.row(y));
            out.data[y * self.dim..(y + 1) * self.dim].copy_from_slice(&row);
        }
        out
    }

    /// Sets column `k` to the residual mass of rows `0..k`, clamped at zero,
    /// and makes row `k` absorbing.
    pub(crate) fn close(&mut self) {
        let k = self.dim - 1;
        for y in 0..k {
            let s: f64 = self.row(y)[..k].iter().sum();
            self.set(y, k, (1.0 - s).max(0.0));
        }
        for y2 in 0..k {
            self.set(k, y2, 0.0);
        }
        self.set(k, k, 1.0);
    }
}

/// Builds `P^{(j)}` for depth `k` from a window table covering `w < k` and
/// `l < k`.
pub(crate) fn epoch_matrix(params: &ProtocolParams, table: &WindowTable, k: usize, j: u32) -> TransitionMatrix {
    let lambda = params.lambda();
    let (ph, pa) = (params.h / lambda, params.a / lambda);
    let mut m = TransitionMatrix::zeros(k + 1, j);
    // P_{y,y'} = (h/λ) Q(y, y') + (a/λ) P_{y+1,y'}, Q(u, y') = P_{W|L}(y'−u | j−1−u).
    for y2 in 0..k {
        let mut next = 0.0;
        for y in (0..=y2).rev() {
            let q = table.p(y2 - y, j as i64 - 1 - y as i64);
            let v = ph * q + pa * next;
            m.set(y, y2, v);
            next = v;
        }
    }
    m.close();
    m
}

/// `P^{(j)}` for the depth in `params`.
pub fn transition_matrix(params: &ProtocolParams, j: u32) -> Result<TransitionMatrix> {
    let k = params.k as usize;
    if j == 0 || j as usize > k {
        return Err(Error::InvalidParameter(format!("epoch {j} outside 1..={k}")));
    }
    let table = WindowTable::new(params, k, k);
    Ok(epoch_matrix(params, &table, k, j))
}

/// `Σ_{i<k} e(i) Σ_{y ≤ k−1−i} v_y`.
pub(crate) fn no_violation_mass(race: &RacePmf, v: &[f64], k: usize) -> f64 {
    let mut cumulative = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &x in &v[..k] {
        acc += x;
        cumulative.push(acc);
    }
    (0..k).map(|i| race.get(i) * cumulative[k - 1 - i]).sum()
}

/// Shared tables for the height-1 probability at every depth up to `k_max`.
#[derive(Debug, Clone)]
pub struct Height1Engine {
    params: ProtocolParams,
    table: WindowTable,
    race: RacePmf,
    k_max: usize,
}

impl Height1Engine {
    /// Default truncation of the race pmf beyond the largest depth.
    pub const E_EXTRA_TERMS: usize = 50;

    pub fn new(params: &ProtocolParams, k_max: u32) -> Result<Self> {
        params.require_tolerance()?;
        let k_max = k_max.max(1) as usize;
        let race = e_pmf(params, k_max + Self::E_EXTRA_TERMS)?;
        Ok(Self {
            params: *params,
            table: WindowTable::new(params, k_max, k_max),
            race,
            k_max,
        })
    }

    pub fn race(&self) -> &RacePmf {
        &self.race
    }

    pub fn table(&self) -> &WindowTable {
        &self.table
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    fn check_k(&self, k: u32) -> Result<usize> {
        let k = k as usize;
        if k == 0 || k > self.k_max {
            return Err(Error::InvalidParameter(format!("k = {k} outside 1..={}", self.k_max)));
        }
        Ok(k)
    }

    /// `P^{(1)}, …, P^{(k)}`.
    pub fn matrices(&self, k: u32) -> Result<Vec<TransitionMatrix>> {
        let k = self.check_k(k)?;
        Ok((1..=k as u32)
            .map(|j| epoch_matrix(&self.params, &self.table, k, j))
            .collect())
    }

    /// Distribution of `Y_k` from `Y_0 = 0`.
    pub fn final_distribution(&self, k: u32) -> Result<Vec<f64>> {
        let kk = self.check_k(k)?;
        let mut v = vec![0.0; kk + 1];
        v[0] = 1.0;
        for j in 1..=k {
            v = epoch_matrix(&self.params, &self.table, kk, j).left_mul(&v);
        }
        Ok(v)
    }

    pub fn probability(&self, k: u32) -> Result<f64> {
        let v = self.final_distribution(k)?;
        Ok((1.0 - no_violation_mass(&self.race, &v, k as usize)).clamp(0.0, 1.0))
    }

    /// Same as [`probability`](Self::probability) with the full matrix
    /// product formed explicitly.
    pub fn probability_full_product(&self, k: u32) -> Result<f64> {
        let mats = self.matrices(k)?;
        let product = mats
            .iter()
            .fold(TransitionMatrix::identity(k as usize + 1), |acc, m| acc.matmul(m));
        let mass = no_violation_mass(&self.race, product.row(0), k as usize);
        Ok((1.0 - mass).clamp(0.0, 1.0))
    }
}

/// Probability that the safety of height 1 is violated.
pub fn violation_probability_height1(params: &ProtocolParams) -> Result<f64> {
    Height1Engine::new(params, params.k)?.probability(params.k)
}
