//! The stochastic binary network: stochastic sign layers followed by an
//! affine head with a loss on top.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{check_len, Result, SbnError};
use crate::layer::{Layer, LayerKind};
use crate::noise::NoiseModel;
use crate::params::ParamBlock;
use crate::rng::{self, Stream};

/// Loss applied to the head logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadLoss {
    /// `-log softmax(logits)[label]`.
    #[default]
    SoftmaxCrossEntropy,
    /// `logits[label]`, a head that is linear in the last binary layer.
    /// Used as a diagnostic objective where several estimators become exact.
    Linear,
}

impl HeadLoss {
    pub fn name(self) -> &'static str {
        match self {
            HeadLoss::SoftmaxCrossEntropy => "softmax-ce",
            HeadLoss::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "softmax-ce" => Some(HeadLoss::SoftmaxCrossEntropy),
            "linear" => Some(HeadLoss::Linear),
            _ => None,
        }
    }
}

/// Affine map from the last binary layer to `classes` logits, plus the loss.
/// Weights are `classes x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    inputs: usize,
    classes: usize,
    pub loss: HeadLoss,
    pub params: ParamBlock,
}

impl Head {
    pub fn new(inputs: usize, classes: usize, loss: HeadLoss, params: ParamBlock) -> Result<Self> {
        if inputs == 0 {
            return Err(SbnError::Contract("head with zero inputs".into()));
        }
        let min_classes = match loss {
            HeadLoss::SoftmaxCrossEntropy => 2,
            HeadLoss::Linear => 1,
        };
        if classes < min_classes {
            return Err(SbnError::Contract(format!(
                "{} head needs at least {min_classes} classes, got {classes}",
                loss.name()
            )));
        }
        check_len("head weights", inputs * classes, params.weights.len())?;
        check_len("head bias", classes, params.bias.len())?;
        Ok(Head {
            inputs,
            classes,
            loss,
            params,
        })
    }

    pub fn zeros(inputs: usize, classes: usize) -> Result<Self> {
        Head::new(
            inputs,
            classes,
            HeadLoss::SoftmaxCrossEntropy,
            ParamBlock::zeros(inputs * classes, classes),
        )
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let w = &self.params.weights;
        (0..self.classes)
            .map(|k| {
                let row = &w[k * self.inputs..(k + 1) * self.inputs];
                self.params.bias[k] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    fn check(&self, x: &[f64], label: usize) -> Result<()> {
        check_len("head input", self.inputs, x.len())?;
        if label >= self.classes {
            return Err(SbnError::Index {
                context: "class label",
                index: label,
                len: self.classes,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn loss_from_logits(&self, logits: &[f64], label: usize) -> f64 {
        match self.loss {
            HeadLoss::SoftmaxCrossEntropy => log_sum_exp(logits) - logits[label],
            HeadLoss::Linear => logits[label],
        }
    }

    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64> {
        self.check(x, label)?;
        Ok(self.loss_from_logits(&self.logits(x), label))
    }

    /// `df_i = f(x) - f(x with unit i flipped)` for every unit, using rank-1
    /// logit updates, `O(inputs * classes)` in total.
    pub fn loss_flips(&self, x: &[f64], label: usize) -> Result<Vec<f64>> {
        self.check(x, label)?;
        Ok(self.loss_flips_unchecked(x, label))
    }

    pub(crate) fn loss_flips_unchecked(&self, x: &[f64], label: usize) -> Vec<f64> {
        let logits = self.logits(x);
        let base = self.loss_from_logits(&logits, label);
        let mut flipped = logits.clone();
        let w = &self.params.weights;
        (0..self.inputs)
            .map(|i| {
                for k in 0..self.classes {
                    flipped[k] = logits[k] - 2.0 * w[k * self.inputs + i] * x[i];
                }
                base - self.loss_from_logits(&flipped, label)
            })
            .collect()
    }

    /// Gradient of the loss with respect to the logits.
    pub fn logit_grad(&self, logits: &[f64], label: usize) -> Vec<f64> {
        match self.loss {
            HeadLoss::SoftmaxCrossEntropy => {
                let mut p = softmax(logits);
                p[label] -= 1.0;
                p
            }
            HeadLoss::Linear => {
                let mut g = vec![0.0; self.classes];
                g[label] = 1.0;
                g
            }
        }
    }

    pub fn accumulate_param_grad(&self, x: &[f64], dlogits: &[f64], grad: &mut ParamBlock) {
        for (k, &d) in dlogits.iter().enumerate() {
            grad.bias[k] += d;
            let row = &mut grad.weights[k * self.inputs..(k + 1) * self.inputs];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
    }

    /// `W^T dlogits`, the loss gradient with respect to the head input.
    pub fn input_grad(&self, dlogits: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (k, &d) in dlogits.iter().enumerate() {
            let row = &self.params.weights[k * self.inputs..(k + 1) * self.inputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += d * w;
            }
        }
        out
    }

    /// `d f(x) / d θ_head` at a binary (or relaxed) input.
    pub fn param_grad(&self, x: &[f64], label: usize) -> ParamBlock {
        let dl = self.logit_grad(&self.logits(x), label);
        let mut g = ParamBlock::zeros_like(&self.params);
        self.accumulate_param_grad(x, &dl, &mut g);
        g
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// One forward sample: the input, then every layer's preactivation and
/// binary state.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub input: Vec<f64>,
    pub preactivations: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
}

impl SampleTrace {
    /// Input of layer `k` (0-based): the network input for `k = 0`, else
    /// the binary state of layer `k - 1`.
    pub fn layer_input(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.input
        } else {
            &self.states[k - 1]
        }
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trace has at least one layer")
    }

    pub fn depth(&self) -> usize {
        self.states.len()
    }
}

/// Draws `x_j = +1` iff `u_j < F(a_j)` with `u_j ~ U[0, 1)`.
pub fn sample_layer<R: Rng + ?Sized>(a: &[f64], noise: NoiseModel, rng: &mut R) -> Vec<f64> {
    a.iter()
        .map(|&aj| {
            let u: f64 = rng.gen();
            if u < noise.cdf(aj) {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_len: usize,
    pub layers: Vec<Layer>,
    pub head: Head,
    pub noise: NoiseModel,
}

/// Parameter-free description of a network's topology.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_len: usize,
    pub layers: Vec<LayerKind>,
    pub classes: usize,
    pub loss: HeadLoss,
}

impl NetworkSpec {
    /// Fully connected stack, e.g. `dense(2, &[5, 5, 5], 2)`.
    pub fn dense(input_len: usize, widths: &[usize], classes: usize) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut n_in = input_len;
        for &w in widths {
            layers.push(LayerKind::Dense { inputs: n_in, outputs: w });
            n_in = w;
        }
        NetworkSpec {
            input_len,
            layers,
            classes,
            loss: HeadLoss::SoftmaxCrossEntropy,
        }
    }

    pub fn with_loss(mut self, loss: HeadLoss) -> Self {
        self.loss = loss;
        self
    }

    pub fn zeros(&self) -> Result<Network> {
        let layers = self.layers.iter().map(|&k| Layer::zeros(k)).collect::<Result<Vec<_>>>()?;
        let last = layers.last().map_or(self.input_len, |l| l.output_len());
        let head = Head::new(last, self.classes, self.loss, ParamBlock::zeros(last * self.classes, self.classes))?;
        Network::new(self.input_len, layers, head, NoiseModel::Logistic)
    }
}

impl Network {
    pub fn new(input_len: usize, layers: Vec<Layer>, head: Head, noise: NoiseModel) -> Result<Self> {
        if layers.is_empty() {
            return Err(SbnError::Contract("network needs at least one stochastic layer".into()));
        }
        if input_len == 0 {
            return Err(SbnError::Contract("network input dimension is zero".into()));
        }
        let mut n = input_len;
        for layer in &layers {
            check_len("layer input", n, layer.input_len())?;
            n = layer.output_len();
        }
        check_len("head input", n, head.inputs())?;
        Ok(Network {
            input_len,
            layers,
            head,
            noise,
        })
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_len: self.input_len,
            layers: self.layers.iter().map(|l| *l.kind()).collect(),
            classes: self.head.classes(),
            loss: self.head.loss,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.output_len()).collect()
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    /// Parameter blocks in order: layers `1..=L`, then the head.
    pub fn blocks(&self) -> Vec<&ParamBlock> {
        self.layers
            .iter()
            .map(|l| &l.params)
            .chain(std::iter::once(&self.head.params))
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.layers
            .iter_mut()
            .map(|l| &mut l.params)
            .chain(std::iter::once(&mut self.head.params))
            .collect()
    }

    pub fn block_name(&self, index: usize) -> String {
        if index < self.layers.len() {
            format!("layer {}", index + 1)
        } else {
            "head".into()
        }
    }

    pub fn forward_sample<R: Rng + ?Sized>(&self, x0: &[f64], rng: &mut R) -> Result<SampleTrace> {
        check_len("network input", self.input_len, x0.len())?;
        Ok(self.forward_sample_unchecked(x0, rng))
    }

    pub(crate) fn forward_sample_unchecked<R: Rng + ?Sized>(&self, x0: &[f64], rng: &mut R) -> SampleTrace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = states.last().map_or(x0, |s| s.as_slice());
            let mut a = vec![0.0; layer.output_len()];
            layer.preactivation_into(input, &mut a);
            let x = sample_layer(&a, self.noise, rng);
            pre.push(a);
            states.push(x);
        }
        SampleTrace {
            input: x0.to_vec(),
            preactivations: pre,
            states,
        }
    }

    /// Builds the trace for prescribed binary states (used to enumerate
    /// outcomes instead of sampling them).
    pub fn trace_from_states(&self, x0: &[f64], states: Vec<Vec<f64>>) -> Result<SampleTrace> {
        check_len("network input", self.input_len, x0.len())?;
        check_len("trace depth", self.layers.len(), states.len())?;
        let mut pre = Vec::with_capacity(states.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { x0 } else { &states[k - 1] };
            check_len("layer state", layer.output_len(), states[k].len())?;
            if states[k].iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(SbnError::Contract("binary states must be +1 or -1".into()));
            }
            pre.push(layer.preactivation(input)?);
        }
        Ok(SampleTrace {
            input: x0.to_vec(),
            preactivations: pre,
            states,
        })
    }

    /// The noise-free sign network (`x = +1` iff `a > 0`).
    pub fn sign_forward(&self, x0: &[f64]) -> Result<SampleTrace> {
        check_len("network input", self.input_len, x0.len())?;
        let mut states: Vec<Vec<f64>> = Vec::new();
        for layer in &self.layers {
            let input = states.last().map_or(x0, |s| s.as_slice());
            let a = layer.preactivation(input)?;
            states.push(a.iter().map(|&v| if v > 0.0 { 1.0 } else { -1.0 }).collect());
        }
        self.trace_from_states(x0, states)
    }

    pub fn head_loss(&self, x_last: &[f64], label: usize) -> Result<f64> {
        self.head.loss(x_last, label)
    }

    pub fn head_loss_flips(&self, x_last: &[f64], label: usize) -> Result<Vec<f64>> {
        self.head.loss_flips(x_last, label)
    }

    pub(crate) fn check_point(&self, x0: &[f64], label: usize) -> Result<()> {
        check_len("network input", self.input_len, x0.len())?;
        if label >= self.classes() {
            return Err(SbnError::Index {
                context: "class label",
                index: label,
                len: self.classes(),
            });
        }
        Ok(())
    }

    /// Monte-Carlo estimate of the expected loss over a batch, `samples`
    /// independent traces per point, drawn from streams keyed by `seed`.
    pub fn expected_loss_mc(&self, data: &Dataset, samples: usize, seed: u64) -> Result<f64> {
        if data.is_empty() {
            return Err(SbnError::Domain("expected loss over an empty batch".into()));
        }
        if samples == 0 {
            return Err(SbnError::Domain("expected loss needs at least one sample".into()));
        }
        let mut total = 0.0;
        for (p, (x0, label)) in data.iter().enumerate() {
            self.check_point(x0, label)?;
            for s in 0..samples {
                let mut rng = rng::stream(seed, Stream::Metrics, &[p as u64, s as u64]);
                let trace = self.forward_sample_unchecked(x0, &mut rng);
                total += self.head.loss(trace.last_state(), label)?;
            }
        }
        Ok(total / (data.len() * samples) as f64)
    }

    /// Mean over `samples` traces of the head's softmax probabilities.
    pub fn predict_ensemble<R: Rng + ?Sized>(&self, x0: &[f64], samples: usize, rng: &mut R) -> Result<Vec<f64>> {
        check_len("network input", self.input_len, x0.len())?;
        if samples == 0 {
            return Err(SbnError::Domain("ensemble prediction needs at least one sample".into()));
        }
        let mut mean = vec![0.0; self.classes()];
        for _ in 0..samples {
            let trace = self.forward_sample_unchecked(x0, rng);
            let p = softmax(&self.head.logits(trace.last_state()));
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= samples as f64);
        Ok(mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64, widths: &[usize]) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = NetworkSpec::dense(2, widths, 3).zeros().unwrap();
        for b in net.blocks_mut() {
            for v in b.iter_mut() {
                *v = rng.gen_range(-1.5..1.5);
            }
        }
        net
    }

    #[test]
    fn zero_head_loss_is_log_k() {
        let net = NetworkSpec::dense(2, &[3], 4).zeros().unwrap();
        let l = net.head_loss(&[1.0, -1.0, 1.0], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert_eq!(net.head_loss_flips(&[1.0, -1.0, 1.0], 2).unwrap(), vec![0.0; 3]);
        assert!(matches!(net.head_loss(&[1.0, -1.0, 1.0], 4), Err(SbnError::Index { .. })));
    }

    #[test]
    fn head_loss_nonnegative_and_matches_naive_formula() {
        let net = random_net(1, &[4]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let label = rng.gen_range(0..3);
            let l = net.head_loss(&x, label).unwrap();
            assert!(l >= 0.0);
            // naive formula; logits are small here so it is accurate
            let z = net.head.logits(&x);
            let naive = -(z[label].exp() / z.iter().map(|v| v.exp()).sum::<f64>()).ln();
            assert!((l - naive).abs() < 1e-13);
        }
    }

    #[test]
    fn head_loss_stable_for_large_logits() {
        let head = Head::new(1, 2, HeadLoss::SoftmaxCrossEntropy, ParamBlock {
            weights: vec![800.0, -800.0],
            bias: vec![0.0, 0.0],
        })
        .unwrap();
        // logits (800, -800): loss for label 1 is 1600 + log(1 + e^-1600)
        let l = head.loss(&[1.0], 1).unwrap();
        assert_eq!(l, 1600.0);
        assert_eq!(head.loss(&[1.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn loss_flips_match_full_recompute() {
        let net = random_net(2, &[5]);
        let x = vec![1.0, -1.0, -1.0, 1.0, 1.0];
        let df = net.head_loss_flips(&x, 1).unwrap();
        let base = net.head_loss(&x, 1).unwrap();
        for i in 0..5 {
            let mut xf = x.clone();
            xf[i] = -xf[i];
            assert!((df[i] - (base - net.head_loss(&xf, 1).unwrap())).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_flips_single_unit_closed_form() {
        // logits(x) = (w0 x, w1 x); f(x) = log(1 + e^{(w1 - w0) x}) for label 0
        let head = Head::new(1, 2, HeadLoss::SoftmaxCrossEntropy, ParamBlock {
            weights: vec![0.7, -0.4],
            bias: vec![0.0, 0.0],
        })
        .unwrap();
        let f = |x: f64| (1.0 + ((-0.4 - 0.7) * x).exp()).ln();
        let df = head.loss_flips(&[1.0], 0).unwrap();
        assert!((df[0] - (f(1.0) - f(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn zero_params_give_fair_coins() {
        let net = NetworkSpec::dense(2, &[3, 3], 2).zeros().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let mut count = 0usize;
        for _ in 0..n {
            let t = net.forward_sample(&[0.3, 0.1], &mut rng).unwrap();
            assert!(t.preactivations.iter().flatten().all(|&a| a == 0.0));
            count += t.states[1].iter().filter(|&&v| v == 1.0).count();
        }
        let p = count as f64 / (3 * n) as f64;
        let se = (0.25 / (3 * n) as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn sample_layer_saturated_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_layer(&[1000.0, -1000.0], NoiseModel::Logistic, &mut rng), vec![1.0, -1.0]);
        }
        let a = [0.2, -0.3, 1.0];
        let s1 = sample_layer(&a, NoiseModel::Logistic, &mut ChaCha8Rng::seed_from_u64(5));
        let s2 = sample_layer(&a, NoiseModel::Logistic, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(s1, s2);
    }

    #[test]
    fn sample_layer_binomial_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        for &a in &[0.0, 0.8, -2.0] {
            let p = NoiseModel::Logistic.cdf(a);
            let hits = (0..n)
                .filter(|_| sample_layer(&[a], NoiseModel::Logistic, &mut rng)[0] == 1.0)
                .count();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits as f64 / n as f64 - p).abs() < 3.0 * se, "a = {a}");
        }
    }

    #[test]
    fn deterministic_limit_follows_sign_network() {
        let mut net = random_net(3, &[4, 3]);
        let x0 = [0.4, -0.7];
        let reference = net.sign_forward(&x0).unwrap();
        for layer in &mut net.layers {
            layer.params.scale(1e4);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let t = net.forward_sample(&x0, &mut rng).unwrap();
            assert_eq!(t.states, reference.states);
        }
    }

    #[test]
    fn ensemble_with_zero_head_is_uniform() {
        let mut net = random_net(5, &[3]);
        net.head.params.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in [1, 7] {
            let p = net.predict_ensemble(&[0.1, 0.2], s, &mut rng).unwrap();
            for v in &p {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let p = random_net(6, &[3]).predict_ensemble(&[0.1, 0.2], 10, &mut rng).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_from_states_rejects_non_binary() {
        let net = random_net(7, &[2]);
        assert!(net.trace_from_states(&[0.0, 0.0], vec![vec![1.0, 0.5]]).is_err());
        let t = net.trace_from_states(&[0.0, 1.0], vec![vec![1.0, -1.0]]).unwrap();
        assert_eq!(t.preactivations[0], net.layers[0].preactivation(&[0.0, 1.0]).unwrap());
    }
}
