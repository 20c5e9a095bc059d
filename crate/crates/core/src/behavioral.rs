//! Weighted cost/quality utility and the reference-dependent prospect
//! value function.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BehavioralError {
    #[error("utility weights must be non-negative with a positive sum")]
    InvalidWeights,
    #[error("loss aversion must exceed 1")]
    InvalidLossAversion,
    #[error("exponents must lie strictly between 0 and 1")]
    InvalidExponent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityWeights<T> {
    w_cost: T,
    w_quality: T,
}

impl<T: Scalar> UtilityWeights<T> {
    pub fn new(w_cost: T, w_quality: T) -> Result<Self, BehavioralError> {
        if !(w_cost >= T::zero() && w_quality >= T::zero() && w_cost + w_quality > T::zero()) {
            return Err(BehavioralError::InvalidWeights);
        }
        Ok(Self { w_cost, w_quality })
    }

    pub fn w_cost(&self) -> T {
        self.w_cost
    }

    pub fn w_quality(&self) -> T {
        self.w_quality
    }
}

/// `W_c * U(c) + W_q * U(q)`. Component utilities are supplied by the
/// caller; cost utility is conventionally non-positive.
pub fn utility_combined<T: Scalar>(u_cost: T, u_quality: T, weights: &UtilityWeights<T>) -> T {
    weights.w_cost * u_cost + weights.w_quality * u_quality
}

pub const DEFAULT_LOSS_AVERSION: f64 = 2.25;
pub const DEFAULT_EXPONENT: f64 = 0.88;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProspectParams<T> {
    lambda: T,
    gain_exp: T,
    loss_exp: T,
    reference: T,
}

impl<T: Scalar> ProspectParams<T> {
    pub fn new(lambda: T, gain_exp: T, loss_exp: T, reference: T) -> Result<Self, BehavioralError> {
        if !lambda.is_finite() || lambda <= T::one() {
            return Err(BehavioralError::InvalidLossAversion);
        }
        let unit = |e: T| e > T::zero() && e < T::one();
        if !unit(gain_exp) || !unit(loss_exp) {
            return Err(BehavioralError::InvalidExponent);
        }
        Ok(Self { lambda, gain_exp, loss_exp, reference })
    }

    pub fn with_reference(self, reference: T) -> Self {
        Self { reference, ..self }
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn gain_exp(&self) -> T {
        self.gain_exp
    }

    pub fn loss_exp(&self) -> T {
        self.loss_exp
    }

    pub fn reference(&self) -> T {
        self.reference
    }
}

impl<T: Scalar> Default for ProspectParams<T> {
    /// lambda = 2.25, both exponents 0.88, reference 0.
    fn default() -> Self {
        Self {
            lambda: T::lit(DEFAULT_LOSS_AVERSION),
            gain_exp: T::lit(DEFAULT_EXPONENT),
            loss_exp: T::lit(DEFAULT_EXPONENT),
            reference: T::zero(),
        }
    }
}

/// `(x - r)^a` for gains, `-lambda (r - x)^b` for losses.
pub fn prospect_value<T: Scalar>(x: T, params: &ProspectParams<T>) -> T {
    let r = params.reference;
    if x >= r {
        (x - r).powf(params.gain_exp)
    } else {
        -params.lambda * (r - x).powf(params.loss_exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combined_utility() {
        let w = UtilityWeights::new(0.0, 1.0).unwrap();
        assert_eq!(utility_combined(-3.0, 0.7, &w), 0.7);
        let w = UtilityWeights::new(0.4, 0.6).unwrap();
        assert!((utility_combined(-0.5, 0.8, &w) - 0.28f64).abs() < 1e-15);
        assert_eq!(utility_combined(0.0, 0.0, &w), 0.0);
    }

    #[test]
    fn weight_validation() {
        assert!(UtilityWeights::new(0.0, 0.0).is_err());
        assert!(UtilityWeights::new(-0.1, 1.0).is_err());
        assert!(UtilityWeights::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn prospect_examples() {
        let p = ProspectParams::new(2.25, 0.88, 0.88, 3.0).unwrap();
        assert_eq!(prospect_value(3.0, &p), 0.0);
        assert_eq!(prospect_value(4.0, &p), 1.0);
        assert_eq!(prospect_value(2.0, &p), -2.25);

        let q = ProspectParams::new(2.0, 0.5, 0.5, 0.0).unwrap();
        assert_eq!(prospect_value(0.25, &q), 0.5);
        assert_eq!(prospect_value(-0.25, &q), -1.0);
    }

    #[test]
    fn param_validation() {
        assert_eq!(ProspectParams::new(1.0, 0.5, 0.5, 0.0), Err(BehavioralError::InvalidLossAversion));
        assert_eq!(ProspectParams::new(2.0, 1.0, 0.5, 0.0), Err(BehavioralError::InvalidExponent));
        assert_eq!(ProspectParams::new(2.0, 0.5, 0.0, 0.0), Err(BehavioralError::InvalidExponent));
    }

    #[test]
    fn defaults() {
        let p = ProspectParams::<f32>::default();
        assert_eq!((p.lambda(), p.gain_exp(), p.loss_exp(), p.reference()), (2.25, 0.88, 0.88, 0.0));
    }
}
