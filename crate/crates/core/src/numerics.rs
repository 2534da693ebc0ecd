//! Quadrature, distribution kernels and power-series arithmetic.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Default number of Gauss–Legendre nodes.
pub const QUAD_NODES: usize = 64;

/// Gauss–Legendre rule with nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pairs: Vec<(f64, f64)>,
}

impl Quadrature {
    pub fn new(nodes: usize) -> Self {
        let n = NonZeroUsize::new(nodes).expect("at least one quadrature node");
        Self {
            pairs: GaussLegendre::new(n).as_node_weight_pairs().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.pairs.iter().map(move |&(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b == a {
            return 0.0;
        }
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// The 64-node rule, built once.
pub fn default_quadrature() -> &'static Quadrature {
    static RULE: OnceLock<Quadrature> = OnceLock::new();
    RULE.get_or_init(|| Quadrature::new(QUAD_NODES))
}

const LN_FACT_TABLE: usize = 1024;

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for i in 1..LN_FACT_TABLE {
            acc += (i as f64).ln();
            t.push(acc);
        }
        t
    });
    if (n as usize) < LN_FACT_TABLE {
        return table[n as usize];
    }
    // Stirling series, accurate to well below f64 resolution at n ≥ 1024.
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Poisson pmf `f1(n; mean)`.
pub fn poisson_pmf(n: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - ln_factorial(n)).exp()
}

/// Poisson pmf values `f1(0..=n_max; mean)`.
pub fn poisson_pmfs(n_max: usize, mean: f64) -> Vec<f64> {
    (0..=n_max as u64).map(|n| poisson_pmf(n, mean)).collect()
}

/// Erlang pdf `f2(t; shape, rate)`, zero for `t ≤ 0`.
pub fn erlang_pdf(t: f64, shape: u64, rate: f64) -> f64 {
    if t <= 0.0 || shape == 0 || rate <= 0.0 {
        return 0.0;
    }
    let s = shape as f64;
    (s * rate.ln() + (s - 1.0) * t.ln() - rate * t - ln_factorial(shape - 1)).exp()
}

/// Jumper inter-arrival pdf: `h e^{-h(t-Δ)}` for `t > Δ`, zero otherwise.
pub fn jumper_pdf(t: f64, h: f64, delta: f64) -> f64 {
    if t <= delta {
        0.0
    } else {
        h * (-h * (t - delta)).exp()
    }
}

/// First `len` coefficients of `num / den` as power series. `den[0]` must be
/// nonzero.
pub fn series_div(num: &[f64], den: &[f64], len: usize) -> Vec<f64> {
    assert!(den[0] != 0.0, "series division by a series with zero constant term");
    let mut out = vec![0.0; len];
    for i in 0..len {
        let mut acc = num.get(i).copied().unwrap_or(0.0);
        for j in 1..=i.min(den.len() - 1) {
            acc -= den[j] * out[i - j];
        }
        out[i] = acc / den[0];
    }
    out
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Discrete convolution truncated to `len` terms.
pub fn convolve(x: &[f64], y: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &a) in x.iter().enumerate().take(len) {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in y.iter().enumerate().take(len - i) {
            out[i + j] += a * b;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_is_exact_on_polynomials() {
        let q = default_quadrature();
        assert_relative_eq!(
            q.integrate(0.0, 2.0, |x| x.powi(9)),
            2f64.powi(10) / 10.0,
            max_relative = 1e-14
        );
        assert_eq!(q.integrate(1.0, 1.0, |x| x), 0.0);
    }

    #[test]
    fn quadrature_matches_finer_rule() {
        let fine = Quadrature::new(640);
        let f = |t: f64| erlang_pdf(t, 5, 0.3) * (-0.1 * (10.0 - t)).exp();
        let coarse = default_quadrature().integrate(0.0, 10.0, f);
        assert_relative_eq!(coarse, fine.integrate(0.0, 10.0, f), max_relative = 1e-13);
    }

    #[test]
    fn ln_factorial_agrees_across_the_table_edge() {
        let direct: f64 = (1..=2000u64).map(|i| (i as f64).ln()).sum();
        assert_relative_eq!(ln_factorial(2000), direct, max_relative = 1e-13);
        assert_relative_eq!(
            ln_factorial(1024),
            ln_factorial(1023) + 1024f64.ln(),
            max_relative = 1e-14
        );
        assert_eq!(ln_factorial(0), 0.0);
        assert_relative_eq!(ln_factorial(5), 120f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn poisson_sums_to_one() {
        for mean in [0.0, 1e-3, 0.5, 7.0, 60.0] {
            let s: f64 = poisson_pmfs(400, mean).iter().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-13);
        }
        assert_eq!(poisson_pmf(0, 0.0), 1.0);
        assert_eq!(poisson_pmf(3, 0.0), 0.0);
    }

    #[test]
    fn erlang_integrates_to_one() {
        let fine = Quadrature::new(400);
        for shape in [1, 2, 7] {
            let total = fine.integrate(0.0, 200.0, |t| erlang_pdf(t, shape, 0.5));
            assert_relative_eq!(total, 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn jumper_pdf_support() {
        assert_eq!(jumper_pdf(10.0, 0.1, 10.0), 0.0);
        assert_eq!(jumper_pdf(3.0, 0.1, 10.0), 0.0);
        assert_relative_eq!(jumper_pdf(10.0 + 1e-9, 0.1, 10.0), 0.1, max_relative = 1e-9);
        let total = Quadrature::new(400).integrate(10.0, 600.0, |t| jumper_pdf(t, 0.1, 10.0));
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(compensated_sum(&xs), 2e-16);
    }

    #[test]
    fn series_division_inverts_multiplication() {
        let x = [1.0, 0.5, -0.25, 0.125];
        let y = [2.0, -1.0, 0.3];
        let prod = convolve(&x, &y, 6);
        let back = series_div(&prod, &y, 4);
        for (a, b) in back.iter().zip(x) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
        // 1 / (1 - r) = 1 + r + r^2 + ...
        assert_eq!(series_div(&[1.0], &[1.0, -1.0], 4), vec![1.0; 4]);
    }
}
