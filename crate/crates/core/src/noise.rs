//! Injected noise distributions.
//!
//! A unit fires (`x = +1`) when its preactivation exceeds an independent noise
//! draw, so the firing probability is the noise cdf evaluated at the
//! preactivation. Only the logistic noise is implemented; it turns the network
//! into a sigmoid belief network.

use crate::error::{Result, SbnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    #[default]
    Logistic,
}

impl NoiseModel {
    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::Logistic => "logistic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "logistic" => Some(NoiseModel::Logistic),
            _ => None,
        }
    }

    /// Probability that a unit with preactivation `a` outputs `+1`.
    ///
    /// Never produces NaN for finite input; saturates to exactly 1 for large
    /// positive `a` and to tiny (but correctly rounded) values for large
    /// negative `a`.
    #[inline]
    pub fn cdf(self, a: f64) -> f64 {
        match self {
            NoiseModel::Logistic => logistic(a),
        }
    }

    /// Checked version of [`NoiseModel::cdf`] that rejects non-finite input.
    pub fn try_cdf(self, a: f64) -> Result<f64> {
        if !a.is_finite() {
            return Err(SbnError::Domain(format!("noise cdf at non-finite {a}")));
        }
        Ok(self.cdf(a))
    }

    /// Noise density, the derivative of the cdf.
    #[inline]
    pub fn pdf(self, a: f64) -> f64 {
        match self {
            NoiseModel::Logistic => {
                let e = (-a.abs()).exp();
                let d = 1.0 + e;
                e / (d * d)
            }
        }
    }

    /// Probability of the binary outcome `x` given preactivation `a`.
    #[inline]
    pub fn prob(self, a: f64, x: f64) -> f64 {
        // symmetric noise: P(x) = F(x * a)
        self.cdf(x * a)
    }

    /// d/da log P(x | a) = x * pdf(a) / F(x * a).
    ///
    /// For the logistic noise this is `x * F(-x * a)`, evaluated without a
    /// division so it stays finite in the saturated regime.
    #[inline]
    pub fn log_prob_slope(self, a: f64, x: f64) -> f64 {
        match self {
            NoiseModel::Logistic => x * logistic(-x * a),
        }
    }
}

#[inline]
fn logistic(a: f64) -> f64 {
    // branch-free: the sign of `a` is unpredictable in the Jacobian loops
    let e = (-a.abs()).exp();
    let r = 1.0 / (1.0 + e);
    if a >= 0.0 {
        r
    } else {
        e * r
    }
}
