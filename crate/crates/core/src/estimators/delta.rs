//! Discrete Jacobians: how much the probability of each sampled output state
//! changes when one binary input is flipped,
//!
//! `delta[i][j] = x_j * (F(a_j) - F(a_j(x_prev with i flipped)))`.
//!
//! For dense layers the matrix is small enough to materialize. For
//! convolutions only its transposed product with an output-shaped vector is
//! computed, either directly or with the logistic "ratio convolution" that
//! evaluates `exp` only on outputs and on the kernel.

use crate::error::{check_len, Result, SbnError};
use crate::layer::{ConvShape, Layer, LayerKind};
use crate::network::{Network, SampleTrace};
use crate::noise::NoiseModel;

/// Dense discrete Jacobian of layer `layer` (0-based), stored row-major as
/// `n_in x n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJacobian {
    pub layer: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub entries: Vec<f64>,
}

impl DiscreteJacobian {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n_out + j]
    }

    /// `g_in[i] = sum_j delta[i][j] * g_out[j]`
    pub fn apply(&self, g_out: &[f64]) -> Vec<f64> {
        (0..self.n_in)
            .map(|i| {
                let row = &self.entries[i * self.n_out..(i + 1) * self.n_out];
                row.iter().zip(g_out).map(|(d, g)| d * g).sum()
            })
            .collect()
    }
}

fn check_binary_layer(net: &Network, trace: &SampleTrace, layer: usize) -> Result<()> {
    if layer >= net.depth() || trace.depth() != net.depth() {
        return Err(SbnError::Contract(format!(
            "layer {layer} not in a network/trace of depth {}/{}",
            net.depth(),
            trace.depth()
        )));
    }
    if layer == 0 {
        return Err(SbnError::Contract(
            "discrete Jacobians need binary inputs; the first layer's input is real".into(),
        ));
    }
    Ok(())
}

/// Materializes the discrete Jacobian of dense layer `layer` (0-based, `>= 1`).
pub fn delta_fc(net: &Network, trace: &SampleTrace, layer: usize) -> Result<DiscreteJacobian> {
    check_binary_layer(net, trace, layer)?;
    let l = &net.layers[layer];
    let LayerKind::Dense { inputs, outputs } = *l.kind() else {
        return Err(SbnError::Contract("delta_fc on a conv layer".into()));
    };
    let a = &trace.preactivations[layer];
    let x = &trace.states[layer];
    let x_prev = trace.layer_input(layer);
    let noise = net.noise;
    let w = l.weights();
    let base: Vec<f64> = a.iter().map(|&aj| noise.cdf(aj)).collect();
    let mut entries = vec![0.0; inputs * outputs];
    for i in 0..inputs {
        let xi = x_prev[i];
        for j in 0..outputs {
            let flipped = a[j] - 2.0 * w[j * inputs + i] * xi;
            entries[i * outputs + j] = x[j] * (base[j] - noise.cdf(flipped));
        }
    }
    Ok(DiscreteJacobian {
        layer,
        n_in: inputs,
        n_out: outputs,
        entries,
    })
}

/// `delta^T`-product for a dense layer without materializing the matrix.
pub(crate) fn delta_fc_apply(layer: &Layer, noise: NoiseModel, a: &[f64], x: &[f64], x_prev: &[f64], g_out: &[f64], g_in: &mut [f64]) {
    let inputs = layer.input_len();
    let w = layer.weights();
    g_in.iter_mut().for_each(|v| *v = 0.0);
    for (j, (&aj, &gj)) in a.iter().zip(g_out).enumerate() {
        let gt = gj * x[j];
        if gt == 0.0 {
            continue;
        }
        let fa = noise.cdf(aj);
        let row = &w[j * inputs..(j + 1) * inputs];
        for ((gi, &wji), &xi) in g_in.iter_mut().zip(row).zip(x_prev) {
            *gi += gt * (fa - noise.cdf(aj - 2.0 * wji * xi));
        }
    }
}

fn conv_parts<'a>(net: &'a Network, trace: &SampleTrace, layer: usize, g_out: &[f64]) -> Result<(&'a Layer, ConvShape)> {
    check_binary_layer(net, trace, layer)?;
    let l = &net.layers[layer];
    let LayerKind::Conv2d(shape) = *l.kind() else {
        return Err(SbnError::Contract("convolutional delta on a dense layer".into()));
    };
    check_len("conv output gradient", shape.output_len(), g_out.len())?;
    Ok((l, shape))
}

/// `g_in[c,i] = sum_{o,j} delta[o,c,j,i] g_out[o,j]` for a conv layer, with the
/// sum running over the kernel support only.
pub fn delta_conv_apply(net: &Network, trace: &SampleTrace, layer: usize, g_out: &[f64]) -> Result<Vec<f64>> {
    let (l, s) = conv_parts(net, trace, layer, g_out)?;
    let a = &trace.preactivations[layer];
    let x = &trace.states[layer];
    let x_prev = trace.layer_input(layer);
    let w = l.weights();
    let noise = net.noise;
    let mut g_in = vec![0.0; s.input_len()];
    for o in 0..s.out_channels {
        for p in 0..s.out_height() {
            for q in 0..s.out_width() {
                let oj = s.out_index(o, p, q);
                let gt = g_out[oj] * x[oj];
                if gt == 0.0 {
                    continue;
                }
                let fa = noise.cdf(a[oj]);
                for c in 0..s.in_channels {
                    for u in 0..s.kernel_h {
                        for v in 0..s.kernel_w {
                            let ci = s.in_index(c, p * s.stride + u, q * s.stride + v);
                            let flipped = a[oj] - 2.0 * w[s.kernel_index(o, c, u, v)] * x_prev[ci];
                            g_in[ci] += gt * (fa - noise.cdf(flipped));
                        }
                    }
                }
            }
        }
    }
    Ok(g_in)
}

const EXP_CLAMP: f64 = 700.0;

/// Same result as [`delta_conv_apply`] for logistic noise, computed as
///
/// `g_in[c,i] = sum_{o,@j} gt[o,j] / (1 + A[o,j] * Wpm[o,c,i-j]) - sum_{o,@j} gt[o,j] / (1 + A[o,j])`
///
/// with `gt = g_out * x`, `A = exp(a)` and `Wpm = exp(-2 w x_prev[c,i])`
/// taken from the two precomputed kernels `exp(+-2w)`.
pub fn ratio_conv_apply(net: &Network, trace: &SampleTrace, layer: usize, g_out: &[f64]) -> Result<Vec<f64>> {
    if net.noise != NoiseModel::Logistic {
        return Err(SbnError::Contract("ratio convolution requires logistic noise".into()));
    }
    let (l, s) = conv_parts(net, trace, layer, g_out)?;
    let a = &trace.preactivations[layer];
    let x = &trace.states[layer];
    let x_prev = trace.layer_input(layer);

    let big_a: Vec<f64> = a.iter().map(|&v| v.clamp(-EXP_CLAMP, EXP_CLAMP).exp()).collect();
    // w_plus = exp(2w) is used where x_prev = -1, w_minus = exp(-2w) where x_prev = +1
    let w_plus: Vec<f64> = l.weights().iter().map(|&w| (2.0 * w).clamp(-EXP_CLAMP, EXP_CLAMP).exp()).collect();
    let w_minus: Vec<f64> = l.weights().iter().map(|&w| (-2.0 * w).clamp(-EXP_CLAMP, EXP_CLAMP).exp()).collect();
    let gt: Vec<f64> = g_out.iter().zip(x).map(|(g, x)| g * x).collect();

    let mut g_in = vec![0.0; s.input_len()];
    for o in 0..s.out_channels {
        for p in 0..s.out_height() {
            for q in 0..s.out_width() {
                let oj = s.out_index(o, p, q);
                let g = gt[oj];
                if g == 0.0 {
                    continue;
                }
                let ao = big_a[oj];
                let first = g / (1.0 + ao);
                for c in 0..s.in_channels {
                    for u in 0..s.kernel_h {
                        for v in 0..s.kernel_w {
                            let ci = s.in_index(c, p * s.stride + u, q * s.stride + v);
                            let kidx = s.kernel_index(o, c, u, v);
                            let wk = if x_prev[ci] > 0.0 { w_minus[kidx] } else { w_plus[kidx] };
                            g_in[ci] += g / (1.0 + ao * wk) - first;
                        }
                    }
                }
            }
        }
    }
    Ok(g_in)
}

/// Applies layer `layer`'s transposed discrete Jacobian to `g_out`, choosing
/// the kernel by layer kind.
pub(crate) fn apply_delta(net: &Network, trace: &SampleTrace, layer: usize, g_out: &[f64], ratio: bool) -> Result<Vec<f64>> {
    let l = &net.layers[layer];
    match l.kind() {
        LayerKind::Dense { inputs, .. } => {
            let mut g_in = vec![0.0; *inputs];
            delta_fc_apply(
                l,
                net.noise,
                &trace.preactivations[layer],
                &trace.states[layer],
                trace.layer_input(layer),
                g_out,
                &mut g_in,
            );
            Ok(g_in)
        }
        LayerKind::Conv2d(_) if ratio && net.noise == NoiseModel::Logistic => ratio_conv_apply(net, trace, layer, g_out),
        LayerKind::Conv2d(_) => delta_conv_apply(net, trace, layer, g_out),
    }
}
