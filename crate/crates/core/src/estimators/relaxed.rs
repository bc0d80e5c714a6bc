//! The deterministic relaxation that replaces every `sign(a - Z)` by its
//! mean `E[sign(a - Z)] = 2F(a) - 1` (`tanh(a / 2)` for logistic noise).

use crate::error::Result;
use crate::gradient::GradientEstimate;
use crate::network::Network;

/// Preactivations and relaxed activations of every layer.
fn relaxed_forward(net: &Network, x0: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut pre = Vec::with_capacity(net.depth());
    let mut act: Vec<Vec<f64>> = Vec::with_capacity(net.depth());
    for (k, layer) in net.layers.iter().enumerate() {
        let input = if k == 0 { x0 } else { &act[k - 1] };
        let mut a = vec![0.0; layer.output_len()];
        layer.preactivation_into(input, &mut a);
        act.push(a.iter().map(|&v| 2.0 * net.noise.cdf(v) - 1.0).collect());
        pre.push(a);
    }
    (pre, act)
}

pub fn relaxed_loss(net: &Network, x0: &[f64], label: usize) -> Result<f64> {
    net.check_point(x0, label)?;
    let (_, act) = relaxed_forward(net, x0);
    net.head.loss(act.last().expect("at least one layer"), label)
}

/// Exact gradient of [`relaxed_loss`].
pub fn tanh_relaxation_gradient(net: &Network, x0: &[f64], label: usize) -> Result<GradientEstimate> {
    net.check_point(x0, label)?;
    let (pre, act) = relaxed_forward(net, x0);
    let depth = net.depth();
    let mut grad = GradientEstimate::zeros_for(net, "tanh");
    grad.traces = 1;

    let head = &net.head;
    let x_last = &act[depth - 1];
    let dlogits = head.logit_grad(&head.logits(x_last), label);
    head.accumulate_param_grad(x_last, &dlogits, &mut grad.blocks[depth]);

    let mut dx = head.input_grad(&dlogits);
    for k in (0..depth).rev() {
        let delta_a: Vec<f64> = pre[k].iter().zip(&dx).map(|(&a, &d)| d * 2.0 * net.noise.pdf(a)).collect();
        let layer = &net.layers[k];
        let input = if k == 0 { x0 } else { &act[k - 1] };
        layer.accumulate_param_grad(input, &delta_a, &mut grad.blocks[k]);
        if k > 0 {
            dx.resize(layer.input_len(), 0.0);
            layer.backward_input(&delta_a, &mut dx);
        }
    }
    Ok(grad)
}
