use crate::error::Result;
use crate::gradient::GradientEstimate;
use crate::network::{Network, SampleTrace};
use crate::noise::NoiseModel;

use super::psa::check_trace;

/// Backward derivative used in place of the derivative of the sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateSlope {
    /// `d/da 2F(a) = 2 p(a)`.
    Noise,
    /// Derivative of the clamped identity, `1{|a| <= 1}`.
    HardClamp,
}

impl SurrogateSlope {
    #[inline]
    pub fn slope(self, noise: NoiseModel, a: f64) -> f64 {
        match self {
            SurrogateSlope::Noise => 2.0 * noise.pdf(a),
            SurrogateSlope::HardClamp => {
                if a.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Chain rule through the sampled states with `slope` standing in for the
/// derivative of every binary activation.
pub fn surrogate_gradient(net: &Network, trace: &SampleTrace, label: usize, slope: SurrogateSlope, name: &str) -> Result<GradientEstimate> {
    check_trace(net, trace, label)?;
    let mut grad = GradientEstimate::zeros_for(net, name);
    grad.traces = 1;

    let depth = net.depth();
    let head = &net.head;
    let x_last = trace.last_state();
    let dlogits = head.logit_grad(&head.logits(x_last), label);
    head.accumulate_param_grad(x_last, &dlogits, &mut grad.blocks[depth]);

    let mut dx = head.input_grad(&dlogits);
    let mut delta_a = Vec::new();
    for k in (0..depth).rev() {
        delta_a.clear();
        delta_a.extend(trace.preactivations[k].iter().zip(&dx).map(|(&a, &d)| d * slope.slope(net.noise, a)));
        let layer = &net.layers[k];
        layer.accumulate_param_grad(trace.layer_input(k), &delta_a, &mut grad.blocks[k]);
        if k > 0 {
            dx.resize(layer.input_len(), 0.0);
            layer.backward_input(&delta_a, &mut dx);
        }
    }
    Ok(grad)
}

pub fn st_gradient(net: &Network, trace: &SampleTrace, label: usize) -> Result<GradientEstimate> {
    surrogate_gradient(net, trace, label, SurrogateSlope::Noise, "st")
}

pub fn hardst_gradient(net: &Network, trace: &SampleTrace, label: usize) -> Result<GradientEstimate> {
    surrogate_gradient(net, trace, label, SurrogateSlope::HardClamp, "hardst")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::psa::{psa_gradient, PsaOptions};
    use crate::network::{HeadLoss, NetworkSpec};
    use crate::oracle;
    use crate::testing::random_net;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_single_layer(seed: u64) -> Network {
        let mut net = random_net(seed, 2, &[3], 1.5);
        net.head.loss = HeadLoss::Linear;
        net
    }

    #[test]
    fn linear_head_single_layer_is_exact_per_trace() {
        let net = linear_single_layer(1);
        let exact = oracle::enumerate_gradient(&net, &[0.3, -0.2], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = net.forward_sample(&[0.3, -0.2], &mut rng).unwrap();
            let st = st_gradient(&net, &t, 1).unwrap();
            let psa = psa_gradient(&net, &t, 1, PsaOptions::default()).unwrap();
            for (a, b) in st.layer(0).iter().zip(exact.layer(0).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(st.max_abs_diff(&psa) < 1e-12);
        }
    }

    #[test]
    fn hardst_multipliers() {
        let net = linear_single_layer(2);
        let mut t = net.forward_sample(&[0.3, -0.2], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        t.preactivations[0] = vec![1.5, -2.0, 3.0];
        let g = hardst_gradient(&net, &t, 0).unwrap();
        assert!(g.layer(0).iter().all(|&v| v == 0.0));

        t.preactivations[0] = vec![0.0; 3];
        let hard = hardst_gradient(&net, &t, 0).unwrap();
        let soft = st_gradient(&net, &t, 0).unwrap();
        for (h, s) in hard.layer(0).iter().zip(soft.layer(0).iter()) {
            assert!((s - 0.5 * h).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weights_give_zero_mean_bias_gradient() {
        let mut net = NetworkSpec::dense(2, &[3, 3], 2).zeros().unwrap();
        net.head.params.bias = vec![0.4, -0.4];
        let exact = oracle::enumerate_gradient(&net, &[0.5, -0.5], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let t = net.forward_sample(&[0.5, -0.5], &mut rng).unwrap();
            let g = st_gradient(&net, &t, 0).unwrap();
            for k in 0..2 {
                assert!(g.layer(k).bias.iter().all(|&v| v == 0.0));
                assert!(exact.layer(k).bias.iter().all(|&v| v.abs() < 1e-15));
            }
        }
    }
}
