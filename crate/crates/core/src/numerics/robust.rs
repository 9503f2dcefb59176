use super::NumericsError;
use serde::{Deserialize, Serialize};

/// Knee location of the Huber penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberParams {
    pub delta: f64,
}

impl HuberParams {
    pub const DEFAULT_DELTA: f64 = 1e-3;

    pub fn new(delta: f64) -> Result<Self, NumericsError> {
        if delta > 0.0 && delta.is_finite() {
            Ok(Self { delta })
        } else {
            Err(NumericsError::InvalidDelta(delta))
        }
    }
}

impl Default for HuberParams {
    fn default() -> Self {
        Self {
            delta: Self::DEFAULT_DELTA,
        }
    }
}

/// Quadratic inside `[-delta, delta]`, linear outside, C¹ at the knee.
#[inline]
pub fn huber(r: f64, params: HuberParams) -> f64 {
    let d = params.delta;
    let a = r.abs();
    if a <= d {
        0.5 * r * r
    } else {
        d * (a - 0.5 * d)
    }
}

#[inline]
pub fn huber_derivative(r: f64, params: HuberParams) -> f64 {
    let d = params.delta;
    if r.abs() <= d {
        r
    } else {
        d * r.signum()
    }
}

/// `log(sum(exp(t)))`, shifted by the maximum term so large inputs do not overflow.
pub fn lse(terms: &[f64]) -> Result<f64, NumericsError> {
    let max = terms
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if terms.is_empty() {
        return Err(NumericsError::EmptyTerms);
    }
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Log-sum-exp together with its gradient (the softmax weights), written into `weights`.
///
/// `weights` must have the same length as `terms`.
pub fn lse_weights(terms: &[f64], weights: &mut [f64]) -> f64 {
    debug_assert_eq!(terms.len(), weights.len());
    let max = terms
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (w, t) in weights.iter_mut().zip(terms) {
        *w = (t - max).exp();
        sum += *w;
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: HuberParams = HuberParams { delta: 1e-3 };

    #[test]
    fn huber_hand_values() {
        assert_eq!(huber(0.0, D), 0.0);
        assert!((huber(1e-3, D) - 5e-7).abs() <= 1e-15);
        assert!((huber(0.1, D) - 9.95e-5).abs() <= 1e-15);
    }

    #[test]
    fn huber_knee_is_continuous() {
        let eps = 1e-12;
        let lo = huber(D.delta - eps, D);
        let hi = huber(D.delta + eps, D);
        assert!((hi - lo).abs() < 1e-14);
        let dlo = huber_derivative(D.delta - eps, D);
        let dhi = huber_derivative(D.delta + eps, D);
        assert!((dhi - dlo).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(HuberParams::new(0.0).is_err());
        assert!(HuberParams::new(-1.0).is_err());
        assert!(HuberParams::new(f64::NAN).is_err());
    }

    #[test]
    fn lse_examples() {
        assert_eq!(lse(&[1.7]).unwrap(), 1.7);
        assert!((lse(&[0.0, 0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        // 3 + ln(e^-2 + e^-1 + 1)
        let expected = 3.0 + ((-2.0f64).exp() + (-1.0f64).exp() + 1.0).ln();
        assert!((lse(&[1.0, 2.0, 3.0]).unwrap() - expected).abs() < 1e-14);
        assert!((lse(&[1.0, 2.0, 3.0]).unwrap() - 3.40760).abs() < 1e-5);
        assert_eq!(lse(&[]), Err(NumericsError::EmptyTerms));
    }

    #[test]
    fn lse_survives_large_terms() {
        let v = lse(&[1000.0, 1000.0]).unwrap();
        assert!((v - 1000.0 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn softmax_weights_sum_to_one() {
        let mut w = [0.0; 3];
        let v = lse_weights(&[0.5, -2.0, 1.0], &mut w);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((v - lse(&[0.5, -2.0, 1.0]).unwrap()).abs() < 1e-15);
    }
}
