//! Stochastic binary networks: sampling, exact expected-loss gradients by
//! enumeration, and sample-based gradient estimators (path sample-analytic,
//! straight-through and baselines), with tools to measure their accuracy and
//! to train small networks.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod gradient;
pub mod hexfloat;
pub mod layer;
pub mod netio;
pub mod network;
pub mod noise;
pub mod oracle;
pub mod params;
pub mod rng;
pub mod svg;
pub mod train;

#[cfg(test)]
pub(crate) mod testing;

pub use data::{gen_toy_data, Dataset};
pub use error::{Result, SbnError};
pub use estimators::Estimator;
pub use gradient::GradientEstimate;
pub use layer::{ConvShape, Layer, LayerKind};
pub use network::{Head, HeadLoss, Network, NetworkSpec, SampleTrace};
pub use noise::NoiseModel;
pub use oracle::ExactOracle;
pub use params::ParamBlock;
