//! Gradient estimators for the expected loss of a stochastic binary network.
//!
//! Every stochastic estimator turns one [`SampleTrace`] into a one-sample
//! estimate; N-sample estimates are plain means of those.

pub mod delta;
pub mod psa;
pub mod reinforce;
pub mod relaxed;
pub mod straight_through;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Result, SbnError};
use crate::gradient::GradientEstimate;
use crate::network::{Network, SampleTrace};
use crate::oracle::ExactOracle;

pub use delta::{delta_conv_apply, delta_fc, ratio_conv_apply, DiscreteJacobian};
pub use psa::{psa_gradient, PsaOptions};
pub use reinforce::{ewa_update, reinforce_gradient, EwaBaselineState, DEFAULT_EWA_MOMENTUM};
pub use relaxed::{relaxed_loss, tanh_relaxation_gradient};
pub use straight_through::{hardst_gradient, st_gradient, surrogate_gradient, SurrogateSlope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Exact,
    Psa,
    PsaEnhanced,
    St,
    HardSt,
    Tanh,
    Reinforce,
    ReinforceEwa,
}

impl Estimator {
    pub const ALL: [Estimator; 8] = [
        Estimator::Exact,
        Estimator::Psa,
        Estimator::PsaEnhanced,
        Estimator::St,
        Estimator::HardSt,
        Estimator::Tanh,
        Estimator::Reinforce,
        Estimator::ReinforceEwa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Exact => "exact",
            Estimator::Psa => "psa",
            Estimator::PsaEnhanced => "psa-enh",
            Estimator::St => "st",
            Estimator::HardSt => "hardst",
            Estimator::Tanh => "tanh",
            Estimator::Reinforce => "reinforce",
            Estimator::ReinforceEwa => "reinforce-ewa",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Estimator::ALL.into_iter().find(|e| e.name() == name)
    }

    /// Whether the estimate depends on a sampled trace.
    pub fn is_stochastic(self) -> bool {
        !matches!(self, Estimator::Exact | Estimator::Tanh)
    }

    pub fn uses_baseline(self) -> bool {
        self == Estimator::ReinforceEwa
    }

    /// One-sample estimate for a single data point. `baseline` is only read
    /// by `reinforce-ewa`. Returns the estimate and the observed objective
    /// (sampled loss, relaxed loss for `tanh`, expected loss for `exact`).
    pub fn point_estimate<R: Rng + ?Sized>(
        self,
        net: &Network,
        x0: &[f64],
        label: usize,
        rng: &mut R,
        baseline: Option<f64>,
    ) -> Result<(GradientEstimate, f64)> {
        match self {
            Estimator::Exact => {
                let oracle = ExactOracle::default();
                let g = oracle.gradient(net, x0, label)?;
                let f = oracle.expected_loss(net, x0, label)?;
                Ok((g, f))
            }
            Estimator::Tanh => Ok((tanh_relaxation_gradient(net, x0, label)?, relaxed_loss(net, x0, label)?)),
            _ => {
                net.check_point(x0, label)?;
                let trace = net.forward_sample_unchecked(x0, rng);
                let f = net.head.loss(trace.last_state(), label)?;
                Ok((self.trace_estimate(net, &trace, label, baseline)?, f))
            }
        }
    }

    /// One-sample estimate from an existing trace.
    pub fn trace_estimate(self, net: &Network, trace: &SampleTrace, label: usize, baseline: Option<f64>) -> Result<GradientEstimate> {
        match self {
            Estimator::Psa => psa_gradient(net, trace, label, PsaOptions::default()),
            Estimator::PsaEnhanced => psa_gradient(net, trace, label, PsaOptions::enhanced()),
            Estimator::St => st_gradient(net, trace, label),
            Estimator::HardSt => hardst_gradient(net, trace, label),
            Estimator::Reinforce => reinforce_gradient(net, trace, label, None),
            Estimator::ReinforceEwa => {
                let mut g = reinforce_gradient(net, trace, label, Some(baseline.unwrap_or(0.0)))?;
                g.estimator = self.name().into();
                Ok(g)
            }
            Estimator::Exact | Estimator::Tanh => Err(SbnError::Contract(format!(
                "{} does not consume sampled traces",
                self.name()
            ))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = SbnError;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::from_name(s).ok_or_else(|| {
            let names: Vec<&str> = Estimator::ALL.iter().map(|e| e.name()).collect();
            SbnError::Domain(format!("unknown estimator {s:?}, expected one of {}", names.join(", ")))
        })
    }
}
