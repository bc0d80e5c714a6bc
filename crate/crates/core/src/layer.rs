//! Affine preactivation layers: fully connected and valid 2-D cross-correlation.
//!
//! Tensors are flattened row-major. A convolution input is `[c][row][col]`,
//! its output `[o][row][col]`, and its kernel `[o][c][u][v]`.

use crate::error::{check_len, Result, SbnError};
use crate::params::ParamBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_height(&self) -> usize {
        (self.in_height - self.kernel_h) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width - self.kernel_w) / self.stride + 1
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    pub fn kernel_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    fn validate(&self) -> Result<()> {
        let dims = [
            self.in_channels,
            self.in_height,
            self.in_width,
            self.out_channels,
            self.kernel_h,
            self.kernel_w,
            self.stride,
        ];
        if dims.contains(&0) {
            return Err(SbnError::Contract(format!("conv shape has a zero dimension: {self:?}")));
        }
        if self.kernel_h > self.in_height || self.kernel_w > self.in_width {
            return Err(SbnError::Contract(format!("kernel larger than input: {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn in_index(&self, c: usize, r: usize, s: usize) -> usize {
        (c * self.in_height + r) * self.in_width + s
    }

    #[inline]
    pub(crate) fn out_index(&self, o: usize, p: usize, q: usize) -> usize {
        (o * self.out_height() + p) * self.out_width() + q
    }

    #[inline]
    pub(crate) fn kernel_index(&self, o: usize, c: usize, u: usize, v: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel_h + u) * self.kernel_w + v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Conv2d(ConvShape),
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Conv2d(s) => s.input_len(),
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            LayerKind::Dense { outputs, .. } => *outputs,
            LayerKind::Conv2d(s) => s.output_len(),
        }
    }

    pub fn weight_len(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
            LayerKind::Conv2d(s) => s.kernel_len(),
        }
    }

    pub fn bias_len(&self) -> usize {
        match self {
            LayerKind::Dense { outputs, .. } => *outputs,
            LayerKind::Conv2d(s) => s.out_channels,
        }
    }

    /// Fan-in of one output unit.
    pub fn fan_in(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Conv2d(s) => s.in_channels * s.kernel_h * s.kernel_w,
        }
    }
}

/// One stochastic layer's preactivation map `a = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    kind: LayerKind,
    pub params: ParamBlock,
}

impl Layer {
    pub fn zeros(kind: LayerKind) -> Result<Self> {
        match kind {
            LayerKind::Dense { inputs, outputs } if inputs == 0 || outputs == 0 => {
                return Err(SbnError::Contract("dense layer with zero width".into()))
            }
            LayerKind::Conv2d(s) => s.validate()?,
            _ => {}
        }
        Ok(Layer {
            kind,
            params: ParamBlock::zeros(kind.weight_len(), kind.bias_len()),
        })
    }

    pub fn dense(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        Self::with_params(LayerKind::Dense { inputs, outputs }, ParamBlock { weights, bias })
    }

    pub fn conv(shape: ConvShape, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        Self::with_params(LayerKind::Conv2d(shape), ParamBlock { weights, bias })
    }

    pub fn with_params(kind: LayerKind, params: ParamBlock) -> Result<Self> {
        let mut layer = Layer::zeros(kind)?;
        check_len("layer weights", kind.weight_len(), params.weights.len())?;
        check_len("layer bias", kind.bias_len(), params.bias.len())?;
        layer.params = params;
        Ok(layer)
    }

    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn input_len(&self) -> usize {
        self.kind.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.kind.output_len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.params.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.params.bias
    }

    pub fn preactivation(&self, x_prev: &[f64]) -> Result<Vec<f64>> {
        check_len("layer input", self.input_len(), x_prev.len())?;
        let mut out = vec![0.0; self.output_len()];
        self.preactivation_into(x_prev, &mut out);
        Ok(out)
    }

    /// Unchecked preactivation; `out` must have the layer's output length.
    pub fn preactivation_into(&self, x_prev: &[f64], out: &mut [f64]) {
        let w = &self.params.weights;
        let b = &self.params.bias;
        match self.kind {
            LayerKind::Dense { inputs, .. } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &w[j * inputs..(j + 1) * inputs];
                    *o = b[j] + row.iter().zip(x_prev).map(|(w, x)| w * x).sum::<f64>();
                }
            }
            LayerKind::Conv2d(s) => {
                let (oh, ow) = (s.out_height(), s.out_width());
                for o in 0..s.out_channels {
                    for p in 0..oh {
                        for q in 0..ow {
                            let mut acc = b[o];
                            for c in 0..s.in_channels {
                                for u in 0..s.kernel_h {
                                    for v in 0..s.kernel_w {
                                        acc += w[s.kernel_index(o, c, u, v)]
                                            * x_prev[s.in_index(c, p * s.stride + u, q * s.stride + v)];
                                    }
                                }
                            }
                            out[s.out_index(o, p, q)] = acc;
                        }
                    }
                }
            }
        }
    }

    /// Preactivation after flipping the sign of binary input `i`, obtained
    /// from the unflipped preactivation `a` in `O(n_out)` as `a - 2 W[:, i] x_i`.
    pub fn preactivation_flip_fc(&self, x_prev: &[f64], a: &[f64], i: usize) -> Result<Vec<f64>> {
        let LayerKind::Dense { inputs, outputs } = self.kind else {
            return Err(SbnError::Contract("preactivation_flip_fc on a conv layer".into()));
        };
        check_len("layer input", inputs, x_prev.len())?;
        check_len("preactivation", outputs, a.len())?;
        if i >= inputs {
            return Err(SbnError::Index {
                context: "layer input",
                index: i,
                len: inputs,
            });
        }
        let xi = x_prev[i];
        let w = &self.params.weights;
        Ok((0..outputs).map(|j| a[j] - 2.0 * w[j * inputs + i] * xi).collect())
    }

    /// Accumulates `(da/dθ)^T delta_a` into `grad`, the parameter gradient
    /// for upstream preactivation gradient `delta_a`.
    pub fn accumulate_param_grad(&self, x_prev: &[f64], delta_a: &[f64], grad: &mut ParamBlock) {
        match self.kind {
            LayerKind::Dense { inputs, .. } => {
                for (j, &d) in delta_a.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad.bias[j] += d;
                    let row = &mut grad.weights[j * inputs..(j + 1) * inputs];
                    for (g, x) in row.iter_mut().zip(x_prev) {
                        *g += d * x;
                    }
                }
            }
            LayerKind::Conv2d(s) => {
                let (oh, ow) = (s.out_height(), s.out_width());
                for o in 0..s.out_channels {
                    for p in 0..oh {
                        for q in 0..ow {
                            let d = delta_a[s.out_index(o, p, q)];
                            if d == 0.0 {
                                continue;
                            }
                            grad.bias[o] += d;
                            for c in 0..s.in_channels {
                                for u in 0..s.kernel_h {
                                    for v in 0..s.kernel_w {
                                        grad.weights[s.kernel_index(o, c, u, v)] +=
                                            d * x_prev[s.in_index(c, p * s.stride + u, q * s.stride + v)];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `W^T delta_a`: the ordinary input gradient (a transposed convolution
    /// for conv layers). Overwrites `out`.
    pub fn backward_input(&self, delta_a: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let w = &self.params.weights;
        match self.kind {
            LayerKind::Dense { inputs, .. } => {
                for (j, &d) in delta_a.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[j * inputs..(j + 1) * inputs];
                    for (o, wji) in out.iter_mut().zip(row) {
                        *o += d * wji;
                    }
                }
            }
            LayerKind::Conv2d(s) => {
                let (oh, ow) = (s.out_height(), s.out_width());
                for o in 0..s.out_channels {
                    for p in 0..oh {
                        for q in 0..ow {
                            let d = delta_a[s.out_index(o, p, q)];
                            if d == 0.0 {
                                continue;
                            }
                            for c in 0..s.in_channels {
                                for u in 0..s.kernel_h {
                                    for v in 0..s.kernel_w {
                                        out[s.in_index(c, p * s.stride + u, q * s.stride + v)] +=
                                            d * w[s.kernel_index(o, c, u, v)];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// The layer as an explicit `n_out x n_in` matrix (row-major). For dense
    /// layers this is `W`; for conv layers it is the unrolled kernel.
    pub fn dense_matrix(&self) -> Vec<f64> {
        let (n_in, n_out) = (self.input_len(), self.output_len());
        match self.kind {
            LayerKind::Dense { .. } => self.params.weights.clone(),
            LayerKind::Conv2d(s) => {
                let mut m = vec![0.0; n_out * n_in];
                for o in 0..s.out_channels {
                    for p in 0..s.out_height() {
                        for q in 0..s.out_width() {
                            let row = s.out_index(o, p, q);
                            for c in 0..s.in_channels {
                                for u in 0..s.kernel_h {
                                    for v in 0..s.kernel_w {
                                        let col = s.in_index(c, p * s.stride + u, q * s.stride + v);
                                        m[row * n_in + col] = self.params.weights[s.kernel_index(o, c, u, v)];
                                    }
                                }
                            }
                        }
                    }
                }
                m
            }
        }
    }

    /// Bias broadcast to one value per output unit.
    pub fn unit_bias(&self) -> Vec<f64> {
        match self.kind {
            LayerKind::Dense { .. } => self.params.bias.clone(),
            LayerKind::Conv2d(s) => {
                let per = s.out_height() * s.out_width();
                (0..s.output_len()).map(|k| self.params.bias[k / per]).collect()
            }
        }
    }
}
