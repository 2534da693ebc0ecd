use serde::Serialize;

use crate::error::{Error, Result};

/// Mining rates, delay bound and confirmation depth.
///
/// Rates are in blocks per second and `delta` is in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolParams {
    /// Adversarial mining rate.
    pub a: f64,
    /// Honest mining rate.
    pub h: f64,
    /// Propagation delay bound.
    pub delta: f64,
    /// Confirmation depth.
    pub k: u32,
}

impl ProtocolParams {
    pub fn new(a: f64, h: f64, delta: f64, k: u32) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidParameter(format!("a must be finite and >= 0, got {a}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(format!("h must be finite and > 0, got {h}")));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be finite and >= 0, got {delta}"
            )));
        }
        if k < 1 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        Ok(Self { a, h, delta, k })
    }

    /// Builds parameters from the total rate `lambda` and adversarial fraction `beta`.
    pub fn from_lambda_beta(lambda: f64, beta: f64, delta: f64, k: u32) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and > 0, got {lambda}"
            )));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1), got {beta}")));
        }
        Self::new(beta * lambda, (1.0 - beta) * lambda, delta, k)
    }

    pub fn with_k(self, k: u32) -> Self {
        Self { k: k.max(1), ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn lambda(&self) -> f64 {
        self.a + self.h
    }

    pub fn beta(&self) -> f64 {
        self.a / self.lambda()
    }

    /// `1/a > 1/h + Δ`, with `a = 0` always inside.
    pub fn within_tolerance(&self) -> bool {
        self.a == 0.0 || 1.0 / self.a > 1.0 / self.h + self.delta
    }

    pub fn require_tolerance(&self) -> Result<()> {
        if self.within_tolerance() {
            Ok(())
        } else {
            Err(Error::OutOfTolerance {
                inv_a: 1.0 / self.a,
                bound: 1.0 / self.h + self.delta,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_rates() {
        let p = ProtocolParams::from_lambda_beta(1.0 / 600.0, 0.25, 10.0, 3).unwrap();
        assert!((p.lambda() - 1.0 / 600.0).abs() < 1e-18);
        assert!((p.beta() - 0.25).abs() < 1e-15);
        assert!((p.a - 1.0 / 2400.0).abs() < 1e-18);
    }

    #[test]
    fn tolerance_predicate() {
        let zero = ProtocolParams::new(0.0, 1.0, 100.0, 1).unwrap();
        assert!(zero.within_tolerance());
        let inside = ProtocolParams::new(0.1, 0.3, 1.0, 1).unwrap();
        assert!(inside.within_tolerance());
        let outside = ProtocolParams::new(0.3, 0.35, 1.0, 1).unwrap();
        assert!(!outside.within_tolerance());
        assert!(matches!(outside.require_tolerance(), Err(Error::OutOfTolerance { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ProtocolParams::new(-1.0, 1.0, 0.0, 1).is_err());
        assert!(ProtocolParams::new(0.1, 0.0, 0.0, 1).is_err());
        assert!(ProtocolParams::new(0.1, 1.0, -1.0, 1).is_err());
        assert!(ProtocolParams::new(0.1, 1.0, 1.0, 0).is_err());
        assert!(ProtocolParams::new(f64::NAN, 1.0, 1.0, 1).is_err());
    }
}
