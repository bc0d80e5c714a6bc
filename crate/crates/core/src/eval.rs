//! Gradient-accuracy measurement: banks of one-sample batch gradients at a
//! frozen parameter point, RMSE of M-sample means relative to the true
//! gradient length, and cosine similarity statistics.

use std::path::Path;

use rayon::prelude::*;

use crate::data::{fmt_f64, Dataset};
use crate::error::{Result, SbnError};
use crate::estimators::{Estimator, EwaBaselineState};
use crate::gradient::GradientEstimate;
use crate::network::Network;
use crate::rng::{self, Stream};

/// One-sample estimate of the batch gradient (mean over all points, one
/// trace per point) together with the mean observed objective.
pub fn batch_estimate(
    net: &Network,
    estimator: Estimator,
    data: &Dataset,
    seed: u64,
    sample_index: u64,
    ewa: Option<&mut EwaBaselineState>,
) -> Result<(GradientEstimate, f64)> {
    let points: Vec<usize> = (0..data.len()).collect();
    minibatch_estimate(net, estimator, data, &points, seed, sample_index, ewa)
}

/// Mean of one-sample estimates over the given points of `data`.
///
/// The trace for point `p` comes from the stream `(seed, Sample, [counter, p])`.
/// For `reinforce-ewa` the baseline of `p` is read before and updated after
/// its estimate; a point seen for the first time uses baseline 0.
pub fn minibatch_estimate(
    net: &Network,
    estimator: Estimator,
    data: &Dataset,
    points: &[usize],
    seed: u64,
    counter: u64,
    mut ewa: Option<&mut EwaBaselineState>,
) -> Result<(GradientEstimate, f64)> {
    if points.is_empty() {
        return Err(SbnError::Domain("batch gradient over an empty batch".into()));
    }
    let mut acc = GradientEstimate::zeros_for(net, estimator.name());
    let mut objective = 0.0;
    for &p in points {
        let (x0, label) = data.point(p);
        let mut rng = rng::stream(seed, Stream::Sample, &[counter, p as u64]);
        let baseline = match (&ewa, estimator.uses_baseline()) {
            (Some(state), true) => state.get(p),
            _ => None,
        };
        let (g, f) = estimator.point_estimate(net, x0, label, &mut rng, baseline)?;
        if estimator.uses_baseline() {
            if let Some(state) = ewa.as_deref_mut() {
                state.update(p, f);
            }
        }
        acc.add_assign(&g);
        objective += f;
    }
    let n = points.len() as f64;
    acc.scale(1.0 / n);
    acc.traces = 1;
    Ok((acc, objective / n))
}

/// `T` one-sample batch gradients at a frozen network.
#[derive(Debug, Clone)]
pub struct SampleBank {
    pub point_id: String,
    pub estimator: String,
    pub seed: u64,
    pub samples: Vec<GradientEstimate>,
}

impl SampleBank {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> Option<GradientEstimate> {
        GradientEstimate::mean(&self.samples)
    }
}

/// Collects `t` independent batch-gradient samples. Samples are computed in
/// parallel except for `reinforce-ewa`, whose baseline evolves sequentially
/// through the bank.
pub fn collect_samples(net: &Network, estimator: Estimator, data: &Dataset, t: usize, seed: u64) -> Result<SampleBank> {
    if t == 0 {
        return Err(SbnError::Domain("sample bank needs T >= 1".into()));
    }
    let samples = if estimator.uses_baseline() {
        let mut ewa = EwaBaselineState::default();
        (0..t as u64)
            .map(|s| batch_estimate(net, estimator, data, seed, s, Some(&mut ewa)).map(|(g, _)| g))
            .collect::<Result<Vec<_>>>()?
    } else if !estimator.is_stochastic() {
        let (g, _) = batch_estimate(net, estimator, data, seed, 0, None)?;
        vec![g; t]
    } else {
        (0..t as u64)
            .into_par_iter()
            .map(|s| batch_estimate(net, estimator, data, seed, s, None).map(|(g, _)| g))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(SampleBank {
        point_id: String::new(),
        estimator: estimator.name().into(),
        seed,
        samples,
    })
}

/// Powers of two from 1 up to `t / 2`.
pub fn default_m_grid(t: usize) -> Vec<usize> {
    let mut ms = Vec::new();
    let mut m = 1;
    while m <= (t / 2).max(1) {
        ms.push(m);
        m *= 2;
    }
    ms
}

fn check_bank(bank: &SampleBank, g_true: &GradientEstimate, block: usize) -> Result<()> {
    if bank.is_empty() {
        return Err(SbnError::Domain("empty sample bank".into()));
    }
    if block >= g_true.blocks.len() {
        return Err(SbnError::Index {
            context: "parameter block",
            index: block,
            len: g_true.blocks.len(),
        });
    }
    if bank.samples.iter().any(|s| s.blocks.len() != g_true.blocks.len() || !s.blocks[block].same_shape(&g_true.blocks[block])) {
        return Err(SbnError::Contract("bank samples are not congruent with the true gradient".into()));
    }
    Ok(())
}

/// Means of consecutive disjoint groups of `m` samples, restricted to one
/// parameter block; a trailing remainder shorter than `m` is dropped.
pub fn group_means(bank: &SampleBank, block: usize, m: usize) -> Result<Vec<Vec<f64>>> {
    if m == 0 || m > bank.len() {
        return Err(SbnError::Domain(format!("group size {m} outside 1..={}", bank.len())));
    }
    let groups = bank.len() / m;
    Ok((0..groups)
        .map(|g| {
            let mut mean = bank.samples[g * m].blocks[block].to_vec();
            for s in &bank.samples[g * m + 1..(g + 1) * m] {
                for (acc, v) in mean.iter_mut().zip(s.blocks[block].iter()) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            mean
        })
        .collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub m: usize,
    pub rmse_rel: f64,
    /// `M <= T / 2`, i.e. at least two groups.
    pub reliable: bool,
}

/// `sqrt(mean_g ||mean_g - g_true||^2) / ||g_true||` for each `M`, on block
/// `block` (0-based; the head is the last block).
pub fn rmse_curve(bank: &SampleBank, g_true: &GradientEstimate, ms: &[usize], block: usize) -> Result<Vec<CurvePoint>> {
    check_bank(bank, g_true, block)?;
    let truth = g_true.blocks[block].to_vec();
    let scale = norm(&truth);
    if scale == 0.0 {
        return Err(SbnError::Domain(format!("true gradient of block {block} is zero")));
    }
    ms.iter()
        .map(|&m| {
            let groups = group_means(bank, block, m)?;
            let mse = groups
                .iter()
                .map(|g| g.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum::<f64>()
                / groups.len() as f64;
            Ok(CurvePoint {
                m,
                rmse_rel: mse.sqrt() / scale,
                reliable: 2 * m <= bank.len(),
            })
        })
        .collect()
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineStats {
    pub mean: f64,
    pub p15: f64,
    pub p85: f64,
    /// Groups whose mean had zero norm (cosine taken as 0).
    pub zero_norm_groups: usize,
    pub groups: usize,
}

pub const MIN_COSINE_GROUPS: usize = 10;

/// Cosine of each M-sample group mean against the true gradient of one block.
pub fn cosine_values(bank: &SampleBank, g_true: &GradientEstimate, m: usize, block: usize) -> Result<(Vec<f64>, usize)> {
    check_bank(bank, g_true, block)?;
    let truth = g_true.blocks[block].to_vec();
    let tn = norm(&truth);
    if tn == 0.0 {
        return Err(SbnError::Domain(format!("true gradient of block {block} is zero")));
    }
    let mut zero = 0;
    let values = group_means(bank, block, m)?
        .iter()
        .map(|g| {
            let gn = norm(g);
            if gn == 0.0 {
                zero += 1;
                0.0
            } else {
                (g.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() / (gn * tn)).clamp(-1.0, 1.0)
            }
        })
        .collect();
    Ok((values, zero))
}

pub fn cosine_stats(bank: &SampleBank, g_true: &GradientEstimate, m: usize, block: usize) -> Result<CosineStats> {
    if m == 0 || bank.len() / m < MIN_COSINE_GROUPS {
        return Err(SbnError::Domain(format!(
            "cosine statistics need at least {MIN_COSINE_GROUPS} groups, T = {} and M = {m}",
            bank.len()
        )));
    }
    let (mut values, zero_norm_groups) = cosine_values(bank, g_true, m, block)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    Ok(CosineStats {
        mean,
        p15: percentile(&values, 0.15),
        p85: percentile(&values, 0.85),
        zero_norm_groups,
        groups: values.len(),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub estimator: String,
    /// 1-based layer index; the head is layer `L + 1`.
    pub layer: usize,
    pub m: usize,
    pub rmse_rel: f64,
    /// NaN when fewer than [`MIN_COSINE_GROUPS`] groups are available.
    pub cos_mean: f64,
    pub cos_p15: f64,
    pub cos_p85: f64,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatorReport {
    pub point_id: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: [&str; 8] = ["estimator", "layer", "M", "rmse_rel", "cos_mean", "cos_p15", "cos_p85", "reliable_flag"];

/// Curves and cosine statistics for every parameter block of the bank.
/// Blocks whose true gradient is zero are skipped.
pub fn build_report(bank: &SampleBank, g_true: &GradientEstimate, ms: &[usize]) -> Result<EstimatorReport> {
    let mut rows = Vec::new();
    for block in 0..g_true.blocks.len() {
        if g_true.blocks[block].norm_sq() == 0.0 {
            continue;
        }
        for p in rmse_curve(bank, g_true, ms, block)? {
            let cos = cosine_stats(bank, g_true, p.m, block).ok();
            rows.push(ReportRow {
                estimator: bank.estimator.clone(),
                layer: block + 1,
                m: p.m,
                rmse_rel: p.rmse_rel,
                cos_mean: cos.map_or(f64::NAN, |c| c.mean),
                cos_p15: cos.map_or(f64::NAN, |c| c.p15),
                cos_p85: cos.map_or(f64::NAN, |c| c.p85),
                reliable: p.reliable,
            });
        }
    }
    Ok(EstimatorReport {
        point_id: bank.point_id.clone(),
        seed: bank.seed,
        rows,
    })
}

pub fn report_file_name(point_id: &str, estimator: &str) -> String {
    format!("{point_id}_{estimator}.csv")
}

impl EstimatorReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: csv::Error| SbnError::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(REPORT_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.layer.to_string(),
                r.m.to_string(),
                fmt_f64(r.rmse_rel),
                fmt_f64(r.cos_mean),
                fmt_f64(r.cos_p15),
                fmt_f64(r.cos_p85),
                u8::from(r.reliable).to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SbnError::io(path, e))
    }

    /// Reads rows written by [`EstimatorReport::write_csv`]; point id and
    /// seed are not stored in the file and come back empty.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| SbnError::io(path, e.into()))?;
        let header = r.headers().map_err(|e| SbnError::io(path, e.into()))?.clone();
        if header.iter().collect::<Vec<_>>() != REPORT_HEADER {
            return Err(SbnError::parse(1, format!("unexpected report header {header:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| SbnError::parse(line, e.to_string()))?;
            if rec.len() != 8 {
                return Err(SbnError::parse(line, format!("expected 8 columns, got {}", rec.len())));
            }
            let num = |k: usize| rec[k].parse::<f64>().map_err(|e| SbnError::parse(line, format!("{}: {e}", REPORT_HEADER[k])));
            let int = |k: usize| rec[k].parse::<usize>().map_err(|e| SbnError::parse(line, format!("{}: {e}", REPORT_HEADER[k])));
            rows.push(ReportRow {
                estimator: rec[0].to_string(),
                layer: int(1)?,
                m: int(2)?,
                rmse_rel: num(3)?,
                cos_mean: num(4)?,
                cos_p15: num(5)?,
                cos_p85: num(6)?,
                reliable: match &rec[7] {
                    "1" => true,
                    "0" => false,
                    other => return Err(SbnError::parse(line, format!("bad reliable_flag {other:?}"))),
                },
            });
        }
        Ok(EstimatorReport {
            point_id: String::new(),
            seed: 0,
            rows,
        })
    }
}
