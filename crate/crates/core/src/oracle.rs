//! Exact expected loss and gradient by enumerating every layer's joint
//! binary state space.
//!
//! The layers form a Markov chain over `2^n`-state spaces. Forward marginals
//! are propagated as `mu^k = mu^(k-1) P^k` and value vectors backwards as
//! `v^(k-1) = P^k v^k` with `v^L = f`. Transition rows are generated on the
//! fly from the factorized conditional, so memory stays `O(2^n)`.
//!
//! States are indexed little-endian: bit `j` of the index set means
//! `x_j = +1`, clear means `x_j = -1`. Sums over states run in index order,
//! so results are bit-stable.

use crate::data::Dataset;
use crate::error::{Result, SbnError};
use crate::gradient::GradientEstimate;
use crate::network::Network;
use crate::noise::NoiseModel;
use crate::params::ParamBlock;

pub const DEFAULT_WIDTH_CAP: usize = 20;
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Forward marginal of one layer's joint state given the input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDistribution {
    /// 1-based layer index.
    pub layer: usize,
    pub probs: Vec<f64>,
}

/// `values[s] = E[f | x^k = state s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    pub layer: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub marginals: Vec<LayerDistribution>,
    pub values: Vec<ValueVector>,
    pub expected_loss: f64,
}

/// The binary vector for state index `s` of an `n`-unit layer.
pub fn state_vector(s: usize, n: usize) -> Vec<f64> {
    (0..n).map(|j| if s >> j & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

pub fn state_index(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .fold(0, |acc, (j, _)| acc | 1 << j)
}

/// Joint distribution of independent units with preactivations `a`.
fn product_distribution(noise: NoiseModel, a: &[f64]) -> Vec<f64> {
    let mut dist = Vec::with_capacity(1 << a.len());
    dist.push(1.0);
    for &aj in a {
        let (p_plus, p_minus) = (noise.cdf(aj), noise.cdf(-aj));
        let len = dist.len();
        dist.extend_from_within(..len);
        for s in 0..len {
            dist[s] *= p_minus;
            dist[s + len] *= p_plus;
        }
    }
    dist
}

/// `w_j = sum_{s'} prod_{i != j} p(s'_i) * (v(s' with x_j=+1) - v(s' with x_j=-1))`,
/// i.e. the derivative of `E[v]` with respect to `P(x_j = +1)`.
fn unit_sensitivities(noise: NoiseModel, a: &[f64], v: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|j| {
            let others: Vec<f64> = a.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &ai)| ai).collect();
            let dist = product_distribution(noise, &others);
            let low = (1usize << j) - 1;
            dist.iter()
                .enumerate()
                .map(|(r, &p)| {
                    // insert bit j into r
                    let base = (r & low) | ((r & !low) << 1);
                    p * (v[base | 1 << j] - v[base])
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOracle {
    pub width_cap: usize,
}

impl Default for ExactOracle {
    fn default() -> Self {
        ExactOracle {
            width_cap: DEFAULT_WIDTH_CAP,
        }
    }
}

impl ExactOracle {
    pub fn new(width_cap: usize) -> Self {
        ExactOracle { width_cap }
    }

    pub fn check_capacity(&self, net: &Network) -> Result<()> {
        for (k, layer) in net.layers.iter().enumerate() {
            let width = layer.output_len();
            if width > self.width_cap || width >= usize::BITS as usize - 1 {
                return Err(SbnError::Capacity {
                    layer: k + 1,
                    width,
                    cap: self.width_cap,
                });
            }
        }
        Ok(())
    }

    fn forward(&self, net: &Network, x0: &[f64]) -> Vec<Vec<f64>> {
        let mut marginals: Vec<Vec<f64>> = Vec::with_capacity(net.depth());
        marginals.push(product_distribution(net.noise, &net.layers[0].preactivation(x0).expect("checked input")));
        for layer in &net.layers[1..] {
            let prev = marginals.last().expect("at least one layer");
            let n_prev = layer.input_len();
            let mut next = vec![0.0; 1 << layer.output_len()];
            let mut a = vec![0.0; layer.output_len()];
            for (s, &mu) in prev.iter().enumerate() {
                if mu == 0.0 {
                    continue;
                }
                layer.preactivation_into(&state_vector(s, n_prev), &mut a);
                for (t, p) in product_distribution(net.noise, &a).into_iter().enumerate() {
                    next[t] += mu * p;
                }
            }
            marginals.push(next);
        }
        marginals
    }

    fn backward_values(&self, net: &Network, label: usize) -> Vec<Vec<f64>> {
        let depth = net.depth();
        let n_last = net.layers[depth - 1].output_len();
        let f: Vec<f64> = (0..1usize << n_last)
            .map(|s| net.head.loss_from_logits(&net.head.logits(&state_vector(s, n_last)), label))
            .collect();
        let mut values = vec![Vec::new(); depth];
        values[depth - 1] = f;
        for k in (1..depth).rev() {
            let layer = &net.layers[k];
            let n_prev = layer.input_len();
            let mut a = vec![0.0; layer.output_len()];
            let v_next = &values[k];
            let v: Vec<f64> = (0..1usize << n_prev)
                .map(|s| {
                    layer.preactivation_into(&state_vector(s, n_prev), &mut a);
                    product_distribution(net.noise, &a)
                        .iter()
                        .zip(v_next)
                        .map(|(p, v)| p * v)
                        .sum()
                })
                .collect();
            values[k - 1] = v;
        }
        values
    }

    /// Marginals, value vectors and the expected loss for one data point.
    pub fn enumerate(&self, net: &Network, x0: &[f64], label: usize) -> Result<Enumeration> {
        net.check_point(x0, label)?;
        self.check_capacity(net)?;
        let marginals = self.forward(net, x0);
        let values = self.backward_values(net, label);
        let expected_loss = marginals[0].iter().zip(&values[0]).map(|(m, v)| m * v).sum();
        Ok(Enumeration {
            marginals: marginals
                .into_iter()
                .enumerate()
                .map(|(k, probs)| LayerDistribution { layer: k + 1, probs })
                .collect(),
            values: values
                .into_iter()
                .enumerate()
                .map(|(k, values)| ValueVector { layer: k + 1, values })
                .collect(),
            expected_loss,
        })
    }

    pub fn expected_loss(&self, net: &Network, x0: &[f64], label: usize) -> Result<f64> {
        net.check_point(x0, label)?;
        self.check_capacity(net)?;
        let marginals = self.forward(net, x0);
        let last = marginals.last().expect("at least one layer");
        let n_last = net.layers[net.depth() - 1].output_len();
        Ok(last
            .iter()
            .enumerate()
            .map(|(s, &mu)| {
                if mu == 0.0 {
                    0.0
                } else {
                    mu * net.head.loss_from_logits(&net.head.logits(&state_vector(s, n_last)), label)
                }
            })
            .sum())
    }

    /// Exact gradient of the expected loss in every parameter block.
    pub fn gradient(&self, net: &Network, x0: &[f64], label: usize) -> Result<GradientEstimate> {
        net.check_point(x0, label)?;
        self.check_capacity(net)?;
        let marginals = self.forward(net, x0);
        let values = self.backward_values(net, label);
        let mut grad = GradientEstimate::zeros_for(net, "exact");
        grad.traces = 1;

        for (k, layer) in net.layers.iter().enumerate() {
            let n_out = layer.output_len();
            let mut a = vec![0.0; n_out];
            let mut delta = vec![0.0; n_out];
            let mut accumulate = |x_prev: &[f64], weight: f64, block: &mut ParamBlock| {
                layer.preactivation_into(x_prev, &mut a);
                let w = unit_sensitivities(net.noise, &a, &values[k]);
                for j in 0..n_out {
                    delta[j] = weight * net.noise.pdf(a[j]) * w[j];
                }
                layer.accumulate_param_grad(x_prev, &delta, block);
            };
            if k == 0 {
                accumulate(x0, 1.0, &mut grad.blocks[0]);
            } else {
                let n_prev = layer.input_len();
                for (s, &mu) in marginals[k - 1].iter().enumerate() {
                    if mu != 0.0 {
                        accumulate(&state_vector(s, n_prev), mu, &mut grad.blocks[k]);
                    }
                }
            }
        }

        let n_last = net.layers[net.depth() - 1].output_len();
        let head = grad.blocks.last_mut().expect("head block");
        for (s, &mu) in marginals.last().expect("at least one layer").iter().enumerate() {
            if mu == 0.0 {
                continue;
            }
            let x = state_vector(s, n_last);
            let dl = net.head.logit_grad(&net.head.logits(&x), label);
            let scaled: Vec<f64> = dl.iter().map(|d| d * mu).collect();
            net.head.accumulate_param_grad(&x, &scaled, head);
        }
        Ok(grad)
    }

    /// Central differences of the exact expected loss, step `h`.
    pub fn finite_diff_gradient(&self, net: &Network, x0: &[f64], label: usize, h: f64) -> Result<GradientEstimate> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(SbnError::Domain(format!("finite difference step must be positive, got {h}")));
        }
        net.check_point(x0, label)?;
        self.check_capacity(net)?;
        let mut grad = GradientEstimate::zeros_for(net, "finite-diff");
        grad.traces = 1;
        let mut probe = net.clone();
        for b in 0..grad.blocks.len() {
            for idx in 0..grad.blocks[b].len() {
                let orig = net.blocks()[b].get(idx);
                *probe.blocks_mut()[b].get_mut(idx) = orig + h;
                let plus = self.expected_loss(&probe, x0, label)?;
                *probe.blocks_mut()[b].get_mut(idx) = orig - h;
                let minus = self.expected_loss(&probe, x0, label)?;
                *probe.blocks_mut()[b].get_mut(idx) = orig;
                *grad.blocks[b].get_mut(idx) = (plus - minus) / (2.0 * h);
            }
        }
        Ok(grad)
    }

    /// Mean exact gradient over a dataset.
    pub fn batch_gradient(&self, net: &Network, data: &Dataset) -> Result<GradientEstimate> {
        if data.is_empty() {
            return Err(SbnError::Domain("exact gradient over an empty batch".into()));
        }
        let per_point = data
            .iter()
            .map(|(x, l)| self.gradient(net, x, l))
            .collect::<Result<Vec<_>>>()?;
        let mut g = GradientEstimate::mean(&per_point).expect("non-empty");
        g.estimator = "exact".into();
        Ok(g)
    }

    pub fn batch_expected_loss(&self, net: &Network, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(SbnError::Domain("expected loss over an empty batch".into()));
        }
        let mut total = 0.0;
        for (x, l) in data.iter() {
            total += self.expected_loss(net, x, l)?;
        }
        Ok(total / data.len() as f64)
    }
}

pub fn enumerate_expected_loss(net: &Network, x0: &[f64], label: usize) -> Result<f64> {
    ExactOracle::default().expected_loss(net, x0, label)
}

pub fn enumerate_gradient(net: &Network, x0: &[f64], label: usize) -> Result<GradientEstimate> {
    ExactOracle::default().gradient(net, x0, label)
}

pub fn finite_diff_gradient(net: &Network, x0: &[f64], label: usize, h: f64) -> Result<GradientEstimate> {
    ExactOracle::default().finite_diff_gradient(net, x0, label, h)
}
