/// Weights and biases of one parameterized block (a hidden layer or the head).
///
/// Gradients use the same type so they line up with the parameters they
/// belong to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamBlock {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamBlock {
    pub fn zeros(n_weights: usize, n_bias: usize) -> Self {
        ParamBlock {
            weights: vec![0.0; n_weights],
            bias: vec![0.0; n_bias],
        }
    }

    pub fn zeros_like(other: &ParamBlock) -> Self {
        ParamBlock::zeros(other.weights.len(), other.bias.len())
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &ParamBlock) -> bool {
        self.weights.len() == other.weights.len() && self.bias.len() == other.bias.len()
    }

    /// Weights followed by biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> + '_ {
        self.weights.iter().chain(self.bias.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamBlock) {
        debug_assert!(self.same_shape(other));
        for (s, o) in self.iter_mut().zip(other.iter()) {
            *s += alpha * o;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.iter_mut() {
            *v *= alpha;
        }
    }

    pub fn fill(&mut self, value: f64) {
        for v in self.iter_mut() {
            *v = value;
        }
    }

    pub fn dot(&self, other: &ParamBlock) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn get(&self, index: usize) -> f64 {
        if index < self.weights.len() {
            self.weights[index]
        } else {
            self.bias[index - self.weights.len()]
        }
    }

    pub fn get_mut(&mut self, index: usize) -> &mut f64 {
        let nw = self.weights.len();
        if index < nw {
            &mut self.weights[index]
        } else {
            &mut self.bias[index - nw]
        }
    }
}
