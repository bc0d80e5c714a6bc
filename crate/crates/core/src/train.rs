//! Initialization, SGD with Nesterov momentum, and learning-rate search.

use std::path::Path;
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{fmt_f64, Dataset};
use crate::error::{check_len, Result, SbnError};
use crate::estimators::{Estimator, EwaBaselineState};
use crate::eval::minibatch_estimate;
use crate::gradient::GradientEstimate;
use crate::layer::LayerKind;
use crate::network::{sample_layer, Network, NetworkSpec};
use crate::params::ParamBlock;
use crate::rng::{self, Stream};

pub const WHITEN_STD_FLOOR: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_METRIC_SAMPLES: usize = 10;
pub const DEFAULT_PROBE_EPOCHS: usize = 5;
pub const SCORE_EWA_MOMENTUM: f64 = 0.9;

/// Inputs each layer saw while it was being whitened, one vector per batch
/// point (real inputs for the first layer, sampled states after that).
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningReport {
    pub layer_inputs: Vec<Vec<Vec<f64>>>,
}

/// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases 0, for
/// every layer and the head, drawn from the `Init` stream of `seed`.
pub fn init_uniform(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    let mut net = spec.zeros()?;
    let mut rng = rng::stream(seed, Stream::Init, &[]);
    let fan_ins: Vec<usize> = net
        .layers
        .iter()
        .map(|l| l.kind().fan_in())
        .chain(std::iter::once(net.head.inputs()))
        .collect();
    for (block, fan_in) in net.blocks_mut().into_iter().zip(fan_ins) {
        let r = 1.0 / (fan_in as f64).sqrt();
        for w in &mut block.weights {
            *w = rng.gen_range(-r..=r);
        }
    }
    Ok(net)
}

/// [`init_uniform`], then, if `whiten_batch` is given, per-layer rescaling
/// so that preactivations over the batch have mean 0 and std 1.
pub fn init_network(spec: &NetworkSpec, seed: u64, whiten_batch: Option<&Dataset>) -> Result<Network> {
    let mut net = init_uniform(spec, seed)?;
    if let Some(batch) = whiten_batch {
        whiten(&mut net, batch, seed)?;
    }
    Ok(net)
}

/// Whitens layers bottom-up. Layer `k > 0` sees states sampled from the
/// already whitened layers below (one `Whiten` stream per batch point). The
/// statistics are per unit for dense layers and per output channel for conv
/// layers; standard deviations are floored at [`WHITEN_STD_FLOOR`].
pub fn whiten(net: &mut Network, batch: &Dataset, seed: u64) -> Result<WhiteningReport> {
    if batch.is_empty() {
        return Err(SbnError::Contract("whitening needs a nonempty batch".into()));
    }
    for (x0, _) in batch.iter() {
        check_len("whitening input", net.input_len(), x0.len())?;
    }
    let mut rngs: Vec<_> = (0..batch.len()).map(|p| rng::stream(seed, Stream::Whiten, &[p as u64])).collect();
    let mut inputs: Vec<Vec<f64>> = batch.inputs.clone();
    let mut report = WhiteningReport { layer_inputs: Vec::new() };
    let noise = net.noise;

    for layer in net.layers.iter_mut() {
        let pre: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| {
                let mut a = vec![0.0; layer.output_len()];
                layer.preactivation_into(x, &mut a);
                a
            })
            .collect();
        let (groups, per_group) = match *layer.kind() {
            LayerKind::Dense { outputs, .. } => (outputs, 1),
            LayerKind::Conv2d(s) => (s.out_channels, s.out_height() * s.out_width()),
        };
        let count = (batch.len() * per_group) as f64;
        let mut mean = vec![0.0; groups];
        let mut sq = vec![0.0; groups];
        for a in &pre {
            for (u, &v) in a.iter().enumerate() {
                mean[u / per_group] += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for a in &pre {
            for (u, &v) in a.iter().enumerate() {
                let d = v - mean[u / per_group];
                sq[u / per_group] += d * d;
            }
        }
        let std: Vec<f64> = sq.iter().map(|s| (s / count).sqrt().max(WHITEN_STD_FLOOR)).collect();

        let w_per_group = layer.params.weights.len() / groups;
        for g in 0..groups {
            for w in &mut layer.params.weights[g * w_per_group..(g + 1) * w_per_group] {
                *w /= std[g];
            }
            layer.params.bias[g] = (layer.params.bias[g] - mean[g]) / std[g];
        }

        let next: Vec<Vec<f64>> = inputs
            .iter()
            .zip(rngs.iter_mut())
            .map(|(x, rng)| {
                let mut a = vec![0.0; layer.output_len()];
                layer.preactivation_into(x, &mut a);
                sample_layer(&a, noise, rng)
            })
            .collect();
        report.layer_inputs.push(std::mem::replace(&mut inputs, next));
    }
    Ok(report)
}

/// SGD with Nesterov momentum: `v = mu v + g`, `θ -= lr (g + mu v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NesterovSgd {
    pub lr: f64,
    pub momentum: f64,
    pub velocity: Vec<ParamBlock>,
}

impl NesterovSgd {
    pub fn new(net: &Network, lr: f64, momentum: f64) -> Self {
        NesterovSgd {
            lr,
            momentum,
            velocity: net.blocks().into_iter().map(ParamBlock::zeros_like).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network, grad: &GradientEstimate) -> Result<()> {
        if !grad.is_congruent(net) {
            return Err(SbnError::Contract("gradient is not congruent with the network".into()));
        }
        let mu = self.momentum;
        for ((p, v), g) in net.blocks_mut().into_iter().zip(&mut self.velocity).zip(&grad.blocks) {
            for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                *v = mu * *v + g;
                *p -= self.lr * (g + mu * *v);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub estimator: Estimator,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Samples per point for the logged expected loss and accuracy.
    pub metric_samples: usize,
    /// Skip the per-epoch metrics (used by learning-rate probes).
    pub log_metrics: bool,
}

impl TrainConfig {
    pub fn new(estimator: Estimator, lr: f64, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            estimator,
            lr,
            momentum: DEFAULT_MOMENTUM,
            epochs,
            batch_size: None,
            seed,
            metric_samples: DEFAULT_METRIC_SAMPLES,
            log_metrics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub exp_loss_mc: f64,
    pub train_acc: f64,
    pub lr: f64,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// The estimator's own batch objective after every iteration.
    pub objectives: Vec<f64>,
}

pub const HISTORY_HEADER: [&str; 5] = ["epoch", "exp_loss_mc", "train_acc", "lr", "wallclock_ms"];

impl TrainHistory {
    /// Equal up to wall-clock times.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.objectives.iter().map(|v| v.to_bits()).eq(other.objectives.iter().map(|v| v.to_bits()))
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.exp_loss_mc.to_bits() == b.exp_loss_mc.to_bits()
                    && a.train_acc.to_bits() == b.train_acc.to_bits()
                    && a.lr.to_bits() == b.lr.to_bits()
            })
    }

    /// Exponentially weighted average of the logged expected loss.
    pub fn smoothed_loss(&self, momentum: f64) -> Vec<f64> {
        ewa_series(self.records.iter().map(|r| r.exp_loss_mc), momentum)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: csv::Error| SbnError::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(HISTORY_HEADER).map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                fmt_f64(r.exp_loss_mc),
                fmt_f64(r.train_acc),
                fmt_f64(r.lr),
                format!("{:.3}", r.wallclock_ms),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SbnError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| SbnError::io(path, e.into()))?;
        let mut records = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| SbnError::parse(line, e.to_string()))?;
            if rec.len() != HISTORY_HEADER.len() {
                return Err(SbnError::parse(line, format!("expected 5 columns, got {}", rec.len())));
            }
            let num = |k: usize| rec[k].parse::<f64>().map_err(|e| SbnError::parse(line, format!("{}: {e}", HISTORY_HEADER[k])));
            records.push(EpochRecord {
                epoch: rec[0].parse().map_err(|e| SbnError::parse(line, format!("epoch: {e}")))?,
                exp_loss_mc: num(1)?,
                train_acc: num(2)?,
                lr: num(3)?,
                wallclock_ms: num(4)?,
            });
        }
        Ok(TrainHistory { records, objectives: Vec::new() })
    }
}

pub fn ewa_series(values: impl IntoIterator<Item = f64>, momentum: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut acc: Option<f64> = None;
    for v in values {
        let next = match acc {
            None => v,
            Some(a) => momentum * a + (1.0 - momentum) * v,
        };
        acc = Some(next);
        out.push(next);
    }
    out
}

/// Fraction of points whose ensemble-averaged prediction is the label.
pub fn ensemble_accuracy(net: &Network, data: &Dataset, samples: usize, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (p, (x0, label)) in data.iter().enumerate() {
        let mut rng = rng::stream(seed, Stream::Metrics, &[u64::MAX, p as u64]);
        let probs = net.predict_ensemble(x0, samples, &mut rng)?;
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
            .unwrap_or(0);
        correct += usize::from(best == label);
    }
    Ok(correct as f64 / data.len() as f64)
}

fn first_non_finite(net: &Network) -> Option<usize> {
    net.blocks().iter().position(|b| !b.all_finite())
}

/// Minibatch SGD with Nesterov momentum on one-sample estimates.
///
/// Iteration `i` (counted across epochs) samples point `p` from the stream
/// `(seed, Sample, [i, p])`; epoch `e` shuffles with `(seed, Shuffle, [e])`.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainHistory)> {
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(SbnError::Domain(format!("learning rate must be finite and >= 0, got {}", cfg.lr)));
    }
    if data.is_empty() {
        return Err(SbnError::Domain("training on an empty dataset".into()));
    }
    let batch = cfg.batch_size.unwrap_or(data.len()).clamp(1, data.len());
    let mut net = net.clone();
    let mut opt = NesterovSgd::new(&net, cfg.lr, cfg.momentum);
    let mut ewa = EwaBaselineState::default();
    let mut history = TrainHistory::default();
    let start = Instant::now();
    let mut iteration = 0u64;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        if batch < data.len() {
            order.sort_unstable();
            order.shuffle(&mut rng::stream(cfg.seed, Stream::Shuffle, &[epoch as u64]));
        }
        for chunk in order.chunks(batch) {
            let (grad, objective) = minibatch_estimate(&net, cfg.estimator, data, chunk, cfg.seed, iteration, Some(&mut ewa))?;
            iteration += 1;
            history.objectives.push(objective);
            opt.step(&mut net, &grad)?;
            if let Some(block) = first_non_finite(&net) {
                return Err(SbnError::Divergence {
                    epoch,
                    block: net.block_name(block),
                });
            }
        }
        if cfg.log_metrics {
            let metric_seed = rng::stream_key(cfg.seed, Stream::Metrics, &[epoch as u64]);
            history.records.push(EpochRecord {
                epoch,
                exp_loss_mc: net.expected_loss_mc(data, cfg.metric_samples, metric_seed)?,
                train_acc: ensemble_accuracy(&net, data, cfg.metric_samples, metric_seed)?,
                lr: cfg.lr,
                wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    Ok((net, history))
}

/// `n` learning rates log-uniformly spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

pub fn default_lr_grid() -> Vec<f64> {
    log_grid(1e-6, 1.0, 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrSearch {
    pub best_lr: f64,
    /// `(lr, score)` per grid point; diverged runs score `+inf`.
    pub scores: Vec<(f64, f64)>,
    pub all_diverged: bool,
}

/// Probes every grid learning rate for `probe_epochs` from the same
/// network and seed; the score is the final EWA of the estimator's own
/// objective. Lowest score wins, ties go to the smaller lr.
pub fn lr_grid_search(net: &Network, data: &Dataset, base: &TrainConfig, grid: &[f64], probe_epochs: usize) -> Result<LrSearch> {
    if grid.is_empty() {
        return Err(SbnError::Domain("empty learning-rate grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &lr in grid {
        let cfg = TrainConfig {
            lr,
            epochs: probe_epochs,
            log_metrics: false,
            ..base.clone()
        };
        let score = match train(net, data, &cfg) {
            Ok((_, h)) => {
                let s = ewa_series(h.objectives.iter().copied(), SCORE_EWA_MOMENTUM).last().copied().unwrap_or(f64::INFINITY);
                if s.is_finite() {
                    s
                } else {
                    f64::INFINITY
                }
            }
            Err(SbnError::Divergence { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        scores.push((lr, score));
    }
    let all_diverged = scores.iter().all(|(_, s)| s.is_infinite());
    let best_lr = if all_diverged {
        let smallest = grid.iter().copied().fold(f64::INFINITY, f64::min);
        warn!("every learning rate in the grid diverged; falling back to {smallest}");
        smallest
    } else {
        scores
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
            .map(|(lr, _)| lr)
            .expect("nonempty grid")
    };
    Ok(LrSearch {
        best_lr,
        scores,
        all_diverged,
    })
}
