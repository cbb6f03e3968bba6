//! Huber loss `ℓ_σ(t) = t²` for `|t| ≤ σ`, `2σ|t| − σ²` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Scale of the Huber loss: the transition point between the quadratic and
/// linear branches. Always strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ScaleParam(f64);

impl ScaleParam {
    pub fn new(sigma: f64) -> Result<Self> {
        ensure_finite(sigma, "sigma")?;
        if sigma <= 0.0 {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self(sigma))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Whether `sigma > max{2M, 1}` holds for the sup-norm bound `bound`.
    pub fn exceeds_theory_threshold(self, bound: f64) -> bool {
        self.0 > theory_threshold(bound)
    }

    /// Errors unless `sigma > max{2M, 1}`.
    pub fn require_theory_regime(self, bound: f64) -> Result<()> {
        if self.exceeds_theory_threshold(bound) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "bound requires sigma > max(2M, 1) = {}, got sigma = {} (M = {bound})",
                theory_threshold(bound),
                self.0
            )))
        }
    }
}

/// `max{2M, 1}`.
pub fn theory_threshold(bound: f64) -> f64 {
    (2.0 * bound).max(1.0)
}

impl TryFrom<f64> for ScaleParam {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ScaleParam> for f64 {
    fn from(value: ScaleParam) -> f64 {
        value.0
    }
}

impl std::fmt::Display for ScaleParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

// Unchecked kernels used in inner loops; callers guarantee finite inputs.

#[inline]
pub(crate) fn huber_raw(t: f64, sigma: f64) -> f64 {
    let a = t.abs();
    if a <= sigma {
        t * t
    } else {
        2.0 * sigma * a - sigma * sigma
    }
}

#[inline]
pub(crate) fn huber_deriv_raw(t: f64, sigma: f64) -> f64 {
    if t.abs() <= sigma {
        2.0 * t
    } else {
        2.0 * sigma * t.signum()
    }
}

#[inline]
pub(crate) fn huber_weight_raw(t: f64, sigma: f64) -> f64 {
    let a = t.abs();
    if a <= sigma {
        1.0
    } else {
        sigma / a
    }
}

pub fn huber(t: f64, sigma: ScaleParam) -> Result<f64> {
    ensure_finite(t, "residual")?;
    Ok(huber_raw(t, sigma.get()))
}

/// `2t` inside the quadratic zone, `2σ·sign(t)` outside.
pub fn huber_deriv(t: f64, sigma: ScaleParam) -> Result<f64> {
    ensure_finite(t, "residual")?;
    Ok(huber_deriv_raw(t, sigma.get()))
}

/// IRLS weight `min(1, σ/|t|)`, equal to 1 at `t = 0`.
///
/// Satisfies `huber_deriv(t) = 2·t·huber_weight(t)`.
pub fn huber_weight(t: f64, sigma: ScaleParam) -> Result<f64> {
    ensure_finite(t, "residual")?;
    Ok(huber_weight_raw(t, sigma.get()))
}

/// Mean Huber loss of `targets − predictions`.
pub fn empirical_risk(predictions: &[f64], targets: &[f64], sigma: ScaleParam) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(invalid(format!(
            "length mismatch: {} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let s = sigma.get();
    let mut total = 0.0;
    for (p, y) in predictions.iter().zip(targets) {
        let r = y - p;
        ensure_finite(r, "residual")?;
        total += huber_raw(r, s);
    }
    Ok(total / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: f64) -> ScaleParam {
        ScaleParam::new(v).unwrap()
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, s(1.0)).unwrap(), 0.0);
        assert_eq!(huber(1.0, s(1.0)).unwrap(), 1.0);
        assert_eq!(huber(3.0, s(1.0)).unwrap(), 5.0);
    }

    #[test]
    fn deriv_examples() {
        assert_eq!(huber_deriv(0.0, s(1.0)).unwrap(), 0.0);
        assert_eq!(huber_deriv(0.5, s(1.0)).unwrap(), 1.0);
        assert_eq!(huber_deriv(-3.0, s(1.0)).unwrap(), -2.0);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(huber_weight(0.0, s(1.0)).unwrap(), 1.0);
        assert_eq!(huber_weight(0.5, s(1.0)).unwrap(), 1.0);
        assert_eq!(huber_weight(4.0, s(2.0)).unwrap(), 0.5);
    }

    #[test]
    fn risk_examples() {
        assert_eq!(empirical_risk(&[0.0, 0.0], &[1.0, -1.0], s(2.0)).unwrap(), 1.0);
        assert_eq!(empirical_risk(&[0.0], &[3.0], s(1.0)).unwrap(), 5.0);
        assert!(matches!(empirical_risk(&[], &[], s(1.0)), Err(Error::EmptyDataset)));
        assert!(matches!(
            empirical_risk(&[0.0], &[1.0, 2.0], s(1.0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ScaleParam::new(0.0).is_err());
        assert!(ScaleParam::new(-1.0).is_err());
        assert!(ScaleParam::new(f64::NAN).is_err());
        assert!(ScaleParam::new(f64::INFINITY).is_err());
        assert!(huber(f64::NAN, s(1.0)).is_err());
        assert!(huber_deriv(f64::INFINITY, s(1.0)).is_err());
        assert!(huber_weight(f64::NEG_INFINITY, s(1.0)).is_err());
    }

    #[test]
    fn theory_guard() {
        assert!(s(5.0).require_theory_regime(2.0).is_ok());
        assert!(s(4.0).require_theory_regime(2.0).is_err());
        assert!(s(0.9).require_theory_regime(0.1).is_err());
        assert!(s(1.1).require_theory_regime(0.1).is_ok());
    }

    #[test]
    fn continuous_at_joint() {
        for sigma in [0.01, 0.3, 1.0, 7.5] {
            let below = huber_raw(sigma * (1.0 - 1e-12), sigma);
            let above = huber_raw(sigma * (1.0 + 1e-12), sigma);
            assert!((below - above).abs() < 1e-9 * sigma * sigma.max(1.0));
            let d_below = huber_deriv_raw(sigma * (1.0 - 1e-12), sigma);
            let d_above = huber_deriv_raw(sigma * (1.0 + 1e-12), sigma);
            assert!((d_below - d_above).abs() < 1e-9 * sigma.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn convex(a in -50.0..50.0f64, b in -50.0..50.0f64, lambda in 0.0..=1.0f64, sigma in 0.01..20.0f64) {
            let mid = huber_raw(lambda * a + (1.0 - lambda) * b, sigma);
            let chord = lambda * huber_raw(a, sigma) + (1.0 - lambda) * huber_raw(b, sigma);
            prop_assert!(mid <= chord + 1e-9 * (1.0 + chord.abs()));
        }

        #[test]
        fn lipschitz(a in -50.0..50.0f64, b in -50.0..50.0f64, sigma in 0.01..20.0f64) {
            let gap = (huber_raw(a, sigma) - huber_raw(b, sigma)).abs();
            prop_assert!(gap <= 2.0 * sigma * (a - b).abs() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn dominated_by_square(t in -50.0..50.0f64, sigma in 0.01..20.0f64) {
            let h = huber_raw(t, sigma);
            prop_assert!(h <= t * t);
            if t.abs() <= sigma {
                prop_assert_eq!(h, t * t);
            } else {
                prop_assert!(h < t * t);
            }
        }

        #[test]
        fn monotone_in_sigma(t in -50.0..50.0f64, s1 in 0.01..20.0f64, s2 in 0.01..20.0f64) {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(huber_raw(t, lo) <= huber_raw(t, hi) + 1e-12);
        }

        #[test]
        fn derivative_matches_finite_difference(t in -30.0..30.0f64, sigma in 0.05..10.0f64) {
            let h = 1e-6;
            prop_assume!((t.abs() - sigma).abs() > 10.0 * h);
            let fd = (huber_raw(t + h, sigma) - huber_raw(t - h, sigma)) / (2.0 * h);
            prop_assert!((fd - huber_deriv_raw(t, sigma)).abs() <= 1e-6 * (1.0 + sigma));
        }

        #[test]
        fn derivative_is_odd_bounded_and_weighted(t in -50.0..50.0f64, sigma in 0.01..20.0f64) {
            let d = huber_deriv_raw(t, sigma);
            prop_assert_eq!(d, -huber_deriv_raw(-t, sigma));
            prop_assert!(d.abs() <= 2.0 * sigma * (1.0 + 1e-15));
            let w = huber_weight_raw(t, sigma);
            prop_assert!(w > 0.0 && w <= 1.0);
            prop_assert!((d - 2.0 * t * w).abs() <= 1e-12 * (1.0 + d.abs()));
        }
    }
}
