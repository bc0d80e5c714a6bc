use std::collections::HashMap;

use crate::error::Result;
use crate::gradient::GradientEstimate;
use crate::network::{Network, SampleTrace};

use super::psa::check_trace;

pub const DEFAULT_EWA_MOMENTUM: f64 = 0.9;

/// Score-function estimate `(f(x^L) - b) * d log p(x | x^0) / dθ` for the
/// hidden layers; the head gets its ordinary gradient at the sampled `x^L`.
pub fn reinforce_gradient(net: &Network, trace: &SampleTrace, label: usize, baseline: Option<f64>) -> Result<GradientEstimate> {
    check_trace(net, trace, label)?;
    let depth = net.depth();
    let name = if baseline.is_some() { "reinforce-ewa" } else { "reinforce" };
    let mut grad = GradientEstimate::zeros_for(net, name);
    grad.traces = 1;

    let x_last = trace.last_state();
    let head = &net.head;
    let logits = head.logits(x_last);
    let f = head.loss_from_logits(&logits, label);
    let dlogits = head.logit_grad(&logits, label);
    head.accumulate_param_grad(x_last, &dlogits, &mut grad.blocks[depth]);

    let coef = f - baseline.unwrap_or(0.0);
    if coef == 0.0 {
        return Ok(grad);
    }
    for k in 0..depth {
        let delta_a: Vec<f64> = trace.preactivations[k]
            .iter()
            .zip(&trace.states[k])
            .map(|(&a, &x)| coef * net.noise.log_prob_slope(a, x))
            .collect();
        net.layers[k].accumulate_param_grad(trace.layer_input(k), &delta_a, &mut grad.blocks[k]);
    }
    Ok(grad)
}

/// Per-data-point exponentially weighted average of observed losses.
#[derive(Debug, Clone, PartialEq)]
pub struct EwaBaselineState {
    pub momentum: f64,
    values: HashMap<usize, f64>,
}

impl Default for EwaBaselineState {
    fn default() -> Self {
        EwaBaselineState::new(DEFAULT_EWA_MOMENTUM)
    }
}

impl EwaBaselineState {
    pub fn new(momentum: f64) -> Self {
        EwaBaselineState {
            momentum,
            values: HashMap::new(),
        }
    }

    pub fn get(&self, point: usize) -> Option<f64> {
        self.values.get(&point).copied()
    }

    pub fn update(&mut self, point: usize, loss: f64) {
        let rho = self.momentum;
        self.values
            .entry(point)
            .and_modify(|b| *b = rho * *b + (1.0 - rho) * loss)
            .or_insert(loss);
    }
}

pub fn ewa_update(mut state: EwaBaselineState, point: usize, loss: f64) -> EwaBaselineState {
    state.update(point, loss);
    state
}
