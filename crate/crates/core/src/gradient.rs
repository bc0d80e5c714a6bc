use crate::network::Network;
use crate::params::ParamBlock;

/// Gradient buffers congruent with a network's parameter blocks
/// (layers `1..=L`, then the head), plus where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub blocks: Vec<ParamBlock>,
    pub estimator: String,
    /// Number of traces (1-sample estimates) averaged into this one.
    pub traces: usize,
}

impl GradientEstimate {
    pub fn zeros_for(net: &Network, estimator: impl Into<String>) -> Self {
        GradientEstimate {
            blocks: net.blocks().into_iter().map(ParamBlock::zeros_like).collect(),
            estimator: estimator.into(),
            traces: 0,
        }
    }

    pub fn layer(&self, k: usize) -> &ParamBlock {
        &self.blocks[k]
    }

    pub fn head(&self) -> &ParamBlock {
        self.blocks.last().expect("gradient has a head block")
    }

    pub fn is_congruent(&self, net: &Network) -> bool {
        let blocks = net.blocks();
        blocks.len() == self.blocks.len() && blocks.iter().zip(&self.blocks).all(|(a, b)| a.same_shape(b))
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(ParamBlock::all_finite)
    }

    pub fn add_assign(&mut self, other: &GradientEstimate) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.axpy(1.0, b);
        }
        self.traces += other.traces;
    }

    pub fn scale(&mut self, alpha: f64) {
        for b in &mut self.blocks {
            b.scale(alpha);
        }
    }

    /// All blocks concatenated.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn max_abs_diff(&self, other: &GradientEstimate) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Arithmetic mean of estimates, accumulated in the given order.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a GradientEstimate>) -> Option<GradientEstimate> {
        let mut iter = items.into_iter();
        let first = iter.next()?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for g in iter {
            for (a, b) in acc.blocks.iter_mut().zip(&g.blocks) {
                a.axpy(1.0, b);
            }
            acc.traces += g.traces;
            count += 1;
        }
        acc.scale(1.0 / count as f64);
        Some(acc)
    }
}
