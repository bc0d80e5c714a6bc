use crate::error::{Result, SbnError};
use crate::gradient::GradientEstimate;
use crate::network::{Network, SampleTrace};
use crate::params::ParamBlock;

use super::delta::apply_delta;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsaOptions {
    /// Derandomize the head gradient over single flips of the last layer.
    pub enhanced_last_layer: bool,
    /// Weight of the flip baseline; `None` means `1 / n_L`.
    pub gamma: Option<f64>,
    /// Use the ratio convolution for conv layers (logistic noise only).
    pub ratio_conv: bool,
}

impl Default for PsaOptions {
    fn default() -> Self {
        PsaOptions {
            enhanced_last_layer: false,
            gamma: None,
            ratio_conv: true,
        }
    }
}

impl PsaOptions {
    pub fn enhanced() -> Self {
        PsaOptions {
            enhanced_last_layer: true,
            ..Default::default()
        }
    }
}

pub(crate) fn check_trace(net: &Network, trace: &SampleTrace, label: usize) -> Result<()> {
    net.check_point(&trace.input, label)?;
    let ok = trace.depth() == net.depth()
        && net.layers.iter().enumerate().all(|(k, l)| {
            trace.preactivations[k].len() == l.output_len() && trace.states[k].len() == l.output_len()
        });
    if !ok {
        return Err(SbnError::Contract("trace does not match the network".into()));
    }
    Ok(())
}

/// Head gradient at the sampled last layer, plus (if enhanced) the weighted
/// flip corrections `gamma * sum_i (g(x flip i) - g(x)) * P(x_i flipped)`.
pub(crate) fn head_gradient(net: &Network, trace: &SampleTrace, label: usize, opts: &PsaOptions) -> ParamBlock {
    let head = &net.head;
    let x = trace.last_state();
    let logits = head.logits(x);
    let d = head.logit_grad(&logits, label);
    let mut g = ParamBlock::zeros_like(&head.params);
    head.accumulate_param_grad(x, &d, &mut g);
    if !opts.enhanced_last_layer {
        return g;
    }

    let n = head.inputs();
    let k = head.classes();
    let gamma = opts.gamma.unwrap_or(1.0 / n as f64);
    let a = &trace.preactivations[net.depth() - 1];
    let w = &head.params.weights;

    // sum_i c_i (d_i (x) x_flip_i - d (x) x)
    //   = (sum_i c_i (d_i - d)) (x) x  -  2 sum_i c_i x_i d_i (x) e_i
    let mut diff_sum = vec![0.0; k];
    let mut flipped = vec![0.0; k];
    for i in 0..n {
        let c = gamma * net.noise.cdf(-x[i] * a[i]);
        for r in 0..k {
            flipped[r] = logits[r] - 2.0 * w[r * n + i] * x[i];
        }
        let di = head.logit_grad(&flipped, label);
        for r in 0..k {
            diff_sum[r] += c * (di[r] - d[r]);
            g.weights[r * n + i] -= 2.0 * c * x[i] * di[r];
        }
    }
    head.accumulate_param_grad(x, &diff_sum, &mut g);
    g
}

/// One-sample PSA estimate of the expected-loss gradient.
pub fn psa_gradient(net: &Network, trace: &SampleTrace, label: usize, opts: PsaOptions) -> Result<GradientEstimate> {
    check_trace(net, trace, label)?;
    let name = if opts.enhanced_last_layer { "psa-enh" } else { "psa" };
    let mut grad = GradientEstimate::zeros_for(net, name);
    grad.traces = 1;

    let depth = net.depth();
    *grad.blocks.last_mut().expect("head block") = head_gradient(net, trace, label, &opts);

    let mut v = net.head.loss_flips_unchecked(trace.last_state(), label);
    let mut delta_a = Vec::new();
    for k in (0..depth).rev() {
        let a = &trace.preactivations[k];
        let x = &trace.states[k];
        delta_a.clear();
        delta_a.extend(a.iter().zip(x).zip(&v).map(|((&aj, &xj), &vj)| net.noise.pdf(aj) * xj * vj));
        net.layers[k].accumulate_param_grad(trace.layer_input(k), &delta_a, &mut grad.blocks[k]);
        if k > 0 {
            v = apply_delta(net, trace, k, &v, opts.ratio_conv)?;
        }
    }
    Ok(grad)
}
