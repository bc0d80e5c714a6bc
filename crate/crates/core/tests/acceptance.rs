//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion (plus indented detail lines) and exits nonzero if any failed.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbn::data::{gen_toy_data, Dataset, DEFAULT_BAND_HEIGHT};
use sbn::estimators::{delta_conv_apply, delta_fc, psa_gradient, ratio_conv_apply, reinforce_gradient, st_gradient, PsaOptions};
use sbn::eval::{collect_samples, cosine_values, loglog_slope, rmse_curve, SampleBank};
use sbn::oracle::{self, ExactOracle, DEFAULT_FD_STEP};
use sbn::train::{default_lr_grid, init_network, lr_grid_search, train, TrainConfig, DEFAULT_PROBE_EPOCHS};
use sbn::{ConvShape, Estimator, GradientEstimate, Head, HeadLoss, Layer, Network, NetworkSpec, NoiseModel, SampleTrace};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome { pass, summary: summary.into(), details: Vec::new() }
    }

    fn detail(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

fn random_net(seed: u64, input: usize, widths: &[usize], scale: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetworkSpec::dense(input, widths, 2).zeros().unwrap();
    for b in net.blocks_mut() {
        for v in b.iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
    net
}

fn toy_data() -> Dataset {
    gen_toy_data(100, 1, DEFAULT_BAND_HEIGHT).unwrap()
}

/// Whitened 5-5-5 network on the toy data: the frozen evaluation point.
fn frozen_point(data: &Dataset) -> Network {
    init_network(&NetworkSpec::dense(2, &[5, 5, 5], 2), 2, Some(data)).unwrap()
}

/// Per-coordinate test `|mean - truth| <= 3 SE` over i.i.d. estimates.
struct ThreeSe {
    worst_z: f64,
    worst_coord: usize,
    failures: usize,
    coords: usize,
}

fn three_se(samples: &[Vec<f64>], truth: &[f64]) -> ThreeSe {
    let t = samples.len() as f64;
    let mut out = ThreeSe { worst_z: 0.0, worst_coord: 0, failures: 0, coords: truth.len() };
    for (i, &g) in truth.iter().enumerate() {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / t;
        let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (t - 1.0);
        let se = (var / t).sqrt();
        let err = (mean - g).abs();
        let z = if se > 0.0 { err / se } else if err <= 1e-12 { 0.0 } else { f64::INFINITY };
        if z > 3.0 {
            out.failures += 1;
        }
        if z > out.worst_z {
            out.worst_z = z;
            out.worst_coord = i;
        }
    }
    out
}

fn sampled_estimates(net: &Network, x0: &[f64], n: usize, seed: u64, f: impl Fn(&SampleTrace) -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = net.forward_sample(x0, &mut rng).unwrap();
            f(&t)
        })
        .collect()
}

fn c1_oracle_fd() -> Outcome {
    let oracle = ExactOracle::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let net = random_net(100 + seed, 2, &[3, 3, 3], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let label = (seed % 2) as usize;
        let g = oracle.gradient(&net, &x0, label).unwrap();
        let fd = oracle.finite_diff_gradient(&net, &x0, label, DEFAULT_FD_STEP).unwrap();
        let scale = g.flatten().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(g.max_abs_diff(&fd) / scale);
    }
    Outcome::new(worst < 1e-6, format!("max relative error {worst:.3e} over 20 points (gate 1e-6)"))
}

/// Every joint state of the network with its probability.
fn all_traces(net: &Network, x0: &[f64]) -> Vec<(f64, SampleTrace)> {
    let widths = net.widths();
    let total: usize = widths.iter().sum();
    (0..1usize << total)
        .map(|s| {
            let mut states = Vec::new();
            let mut off = 0;
            for &w in &widths {
                states.push(oracle::state_vector((s >> off) & ((1 << w) - 1), w));
                off += w;
            }
            let t = net.trace_from_states(x0, states).unwrap();
            let p: f64 = t
                .preactivations
                .iter()
                .zip(&t.states)
                .flat_map(|(a, x)| a.iter().zip(x).map(|(&a, &x)| net.noise.prob(a, x)))
                .product();
            (p, t)
        })
        .collect()
}

fn psa_expectation(net: &Network, x0: &[f64], label: usize) -> GradientEstimate {
    let mut acc = GradientEstimate::zeros_for(net, "psa");
    for (p, t) in all_traces(net, x0) {
        let mut g = psa_gradient(net, &t, label, PsaOptions::default()).unwrap();
        g.scale(p);
        acc.add_assign(&g);
    }
    acc
}

fn c2_single_layer() -> Outcome {
    let mut worst: f64 = 0.0;
    for width in 1..=8 {
        let net = random_net(200 + width as u64, 2, &[width], 1.5);
        let x0 = [0.6, -0.4];
        let exact = oracle::enumerate_gradient(&net, &x0, 1).unwrap();
        worst = worst.max(psa_expectation(&net, &x0, 1).max_abs_diff(&exact));
    }
    Outcome::new(worst <= 1e-12, format!("max |E[psa] - exact| = {worst:.3e} for widths 1..8 (gate 1e-12)"))
}

fn c3_chain_unbiased() -> Outcome {
    let net = random_net(300, 2, &[1, 1, 1, 5], 1.5);
    let x0 = [0.3, 0.8];
    let label = 0;
    let exact = oracle::enumerate_gradient(&net, &x0, label).unwrap();
    let samples = sampled_estimates(&net, &x0, 100_000, 301, |t| psa_gradient(&net, t, label, PsaOptions::default()).unwrap().flatten());
    let r = three_se(&samples, &exact.flatten());
    let bias = psa_expectation(&net, &x0, label);
    let mut per_block = Vec::new();
    for (b, (e, x)) in bias.blocks.iter().zip(&exact.blocks).enumerate() {
        let d = e.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        per_block.push(format!("{}: {d:.2e}", net.block_name(b)));
    }
    Outcome::new(
        r.failures == 0,
        format!("{} of {} coordinates outside 3 SE, worst z = {:.1} (coordinate {})", r.failures, r.coords, r.worst_z, r.worst_coord),
    )
    .detail(format!("max |E[psa] - exact| by enumeration over all traces: {}", per_block.join(", ")))
}

fn c4_last_hidden_unbiased(data: &Dataset) -> Outcome {
    let net = frozen_point(data);
    let (x0, label) = data.point(0);
    let exact = oracle::enumerate_gradient(&net, x0, label).unwrap();
    let samples = sampled_estimates(&net, x0, 100_000, 401, |t| psa_gradient(&net, t, label, PsaOptions::default()).unwrap().blocks[2].to_vec());
    let r = three_se(&samples, &exact.blocks[2].to_vec());
    Outcome::new(r.failures == 0, format!("layer 3: {} of {} coordinates outside 3 SE, worst z = {:.2}", r.failures, r.coords, r.worst_z))
}

fn c5_reinforce_unbiased() -> Outcome {
    let net = random_net(500, 2, &[3, 3, 3], 1.0);
    let x0 = [-0.5, 0.9];
    let label = 1;
    let exact = oracle::enumerate_gradient(&net, &x0, label).unwrap();
    let samples = sampled_estimates(&net, &x0, 100_000, 501, |t| reinforce_gradient(&net, t, label, None).unwrap().flatten());
    let r = three_se(&samples, &exact.flatten());
    Outcome::new(r.failures == 0, format!("{} of {} coordinates outside 3 SE, worst z = {:.2}", r.failures, r.coords, r.worst_z))
}

struct FrozenBanks {
    truth: GradientEstimate,
    psa: SampleBank,
    reinforce: SampleBank,
    st: SampleBank,
    hardst: SampleBank,
}

fn c6_variance_dominance(banks: &FrozenBanks) -> Outcome {
    let psa = rmse_curve(&banks.psa, &banks.truth, &[1], 0).unwrap()[0].rmse_rel;
    let rf = rmse_curve(&banks.reinforce, &banks.truth, &[1], 0).unwrap()[0].rmse_rel;
    Outcome::new(rf >= 10.0 * psa, format!("layer-1 RMSE at M = 1: psa {psa:.4e}, reinforce {rf:.4e}, ratio {:.1} (gate 10)", rf / psa))
}

fn c7_slope_and_floor(data: &Dataset) -> Outcome {
    let net = init_network(&NetworkSpec::dense(2, &[3, 3, 3, 3, 3], 2), 7, Some(data)).unwrap();
    let truth = ExactOracle::default().batch_gradient(&net, data).unwrap();
    let t = 10_000;
    let ms: Vec<usize> = vec![1, 2, 4, 8, 16, 32, 64];
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();

    let rf = collect_samples(&net, Estimator::Reinforce, data, t, 71).unwrap();
    let rf_curve: Vec<f64> = rmse_curve(&rf, &truth, &ms, 0).unwrap().iter().map(|p| p.rmse_rel).collect();
    let slope = loglog_slope(&xs, &rf_curve);

    let psa = collect_samples(&net, Estimator::Psa, data, t, 72).unwrap();
    let psa_curve: Vec<f64> = rmse_curve(&psa, &truth, &ms, 0).unwrap().iter().map(|p| p.rmse_rel).collect();
    let non_increasing = psa_curve.windows(2).all(|w| w[1] <= w[0]);
    // bias of the bank mean and its own sampling noise, relative to |g|
    let mean = psa.mean().unwrap().blocks[0].to_vec();
    let g = truth.blocks[0].to_vec();
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bias = mean.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / gn;
    let var_total: f64 = (0..g.len())
        .map(|i| psa.samples.iter().map(|s| (s.blocks[0].get(i) - mean[i]).powi(2)).sum::<f64>() / (t as f64 - 1.0))
        .sum();
    let noise = (var_total / t as f64).sqrt() / gn;
    let floor_positive = bias > 3.0 * noise;

    let pass = (slope + 0.5).abs() <= 0.1 && non_increasing && floor_positive;
    Outcome::new(
        pass,
        format!("reinforce slope {slope:.3} (gate -0.5 +- 0.1); psa non-increasing {non_increasing}, floor {bias:.3e} vs bank noise {noise:.3e}"),
    )
    .detail(format!("psa curve {:?}", psa_curve.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()))
    .detail(format!("reinforce curve {:?}", rf_curve.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()))
}

fn c8_st_linear_exact() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut traces = 0;
    for seed in 0..10 {
        let mut net = random_net(800 + seed, 2, &[4], 1.5);
        net.head.loss = HeadLoss::Linear;
        let x0 = [0.2 * seed as f64 - 1.0, 0.5];
        let label = (seed % 2) as usize;
        let exact = oracle::enumerate_gradient(&net, &x0, label).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let t = net.forward_sample(&x0, &mut rng).unwrap();
            let g = st_gradient(&net, &t, label).unwrap();
            let d = g.blocks[0].iter().zip(exact.blocks[0].iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(d);
            traces += 1;
        }
    }
    Outcome::new(worst <= 1e-10, format!("max layer-1 |st - exact| = {worst:.3e} over {traces} traces (gate 1e-10)"))
}

fn c9_st_vs_hardst(banks: &FrozenBanks) -> Outcome {
    let (st, _) = cosine_values(&banks.st, &banks.truth, 10, 0).unwrap();
    let (hard, _) = cosine_values(&banks.hardst, &banks.truth, 10, 0).unwrap();
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n)
    };
    let (ms, vs) = stats(&st);
    let (mh, vh) = stats(&hard);
    let se = (vs + vh).sqrt();
    let margin = ms - mh;
    Outcome::new(
        margin > 3.0 * se,
        format!("layer-1 cosine at M = 10 over {} groups: st {ms:.4}, hardst {mh:.4}, margin {margin:.4} = {:.1} SE", st.len(), margin / se),
    )
}

fn c10_conv_delta() -> Outcome {
    let shape = ConvShape { in_channels: 2, in_height: 4, in_width: 4, out_channels: 2, kernel_h: 3, kernel_w: 3, stride: 1 };
    let conv_net = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.input_len();
        let first = Layer::dense(2, n, (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let conv = Layer::conv(
            shape,
            (0..shape.kernel_len()).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..shape.out_channels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let head = Head::zeros(shape.output_len(), 2).unwrap();
        let net = Network::new(2, vec![first, conv], head, NoiseModel::Logistic).unwrap();
        let t = net.forward_sample(&[0.3, -0.7], &mut rng).unwrap();
        let g: Vec<f64> = (0..shape.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (net, t, g)
    };

    let (net, t, g) = conv_net(1000);
    let conv = &net.layers[1];
    let dense = Layer::dense(shape.input_len(), shape.output_len(), conv.dense_matrix(), conv.unit_bias()).unwrap();
    let dnet = Network::new(2, vec![net.layers[0].clone(), dense], net.head.clone(), net.noise).unwrap();
    let dense_result = delta_fc(&dnet, &t, 1).unwrap().apply(&g);
    let conv_result = delta_conv_apply(&net, &t, 1, &g).unwrap();
    let dense_err = dense_result.iter().zip(&conv_result).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut ratio_err: f64 = 0.0;
    for seed in 0..100 {
        let (net, t, g) = conv_net(2000 + seed);
        let naive = delta_conv_apply(&net, &t, 1, &g).unwrap();
        let ratio = ratio_conv_apply(&net, &t, 1, &g).unwrap();
        ratio_err = ratio_err.max(naive.iter().zip(&ratio).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Outcome::new(
        dense_err <= 1e-12 && ratio_err <= 1e-10,
        format!("conv vs dense {dense_err:.3e} (gate 1e-12); ratio vs naive {ratio_err:.3e} over 100 instances (gate 1e-10)"),
    )
}

fn c11_enhancement() -> Outcome {
    let net = random_net(1100, 2, &[3, 3], 1.0);
    let x0 = [0.4, -0.3];
    let label = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(1101);
    let n = 10_000;
    let mut plain = Vec::with_capacity(n);
    let mut enh = Vec::with_capacity(n);
    for _ in 0..n {
        let t = net.forward_sample(&x0, &mut rng).unwrap();
        plain.push(psa_gradient(&net, &t, label, PsaOptions::default()).unwrap().head().to_vec());
        enh.push(psa_gradient(&net, &t, label, PsaOptions::enhanced()).unwrap().head().to_vec());
    }
    let coords = plain[0].len();
    let nf = n as f64;
    let mut worst_z: f64 = 0.0;
    let mut var_plain = 0.0;
    let mut var_enh = 0.0;
    for i in 0..coords {
        let mp = plain.iter().map(|v| v[i]).sum::<f64>() / nf;
        let me = enh.iter().map(|v| v[i]).sum::<f64>() / nf;
        var_plain += plain.iter().map(|v| (v[i] - mp).powi(2)).sum::<f64>() / (nf - 1.0);
        var_enh += enh.iter().map(|v| (v[i] - me).powi(2)).sum::<f64>() / (nf - 1.0);
        // paired differences: both estimates come from the same traces
        let md = me - mp;
        let vd = plain.iter().zip(&enh).map(|(p, e)| (e[i] - p[i] - md).powi(2)).sum::<f64>() / (nf - 1.0);
        let se = (vd / nf).sqrt();
        let z = if se > 0.0 { md.abs() / se } else if md.abs() <= 1e-12 { 0.0 } else { f64::INFINITY };
        worst_z = worst_z.max(z);
    }
    var_plain /= coords as f64;
    var_enh /= coords as f64;
    Outcome::new(
        worst_z <= 3.0 && var_enh < var_plain,
        format!("head means: worst paired z = {worst_z:.2}; mean variance plain {var_plain:.4e}, enhanced {var_enh:.4e}"),
    )
}

fn c12_training(data: &Dataset) -> Outcome {
    let init = frozen_point(data);
    let epochs = 500;
    let mut finals = Vec::new();
    let mut details = Vec::new();
    for est in [Estimator::Psa, Estimator::St, Estimator::Reinforce] {
        let base = TrainConfig::new(est, 0.0, epochs, 12);
        let search = lr_grid_search(&init, data, &base, &default_lr_grid(), DEFAULT_PROBE_EPOCHS).unwrap();
        let cfg = TrainConfig { lr: search.best_lr, ..base };
        let (_, history) = train(&init, data, &cfg).unwrap();
        let smoothed = *history.smoothed_loss(0.9).last().unwrap();
        details.push(format!("{est}: lr {:.3e}, smoothed expected loss {smoothed:.4}", search.best_lr));
        finals.push(smoothed);
    }
    let (psa, st, rf) = (finals[0], finals[1], finals[2]);
    let rel = (psa - st).abs() / psa.min(st);
    let mut out = Outcome::new(
        rel <= 0.05 && psa < rf && st < rf,
        format!("after {epochs} epochs psa {psa:.4}, st {st:.4} (gap {:.1}%, gate 5%), reinforce {rf:.4}", 100.0 * rel),
    );
    for d in details {
        out = out.detail(d);
    }
    out
}

fn c13_complexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1300);
    let spec = NetworkSpec::dense(256, &[256, 256, 256], 10);
    let mut net = spec.zeros().unwrap();
    for b in net.blocks_mut() {
        for v in b.weights.iter_mut() {
            *v = rng.gen_range(-1.0..1.0) / 16.0;
        }
    }
    let x0: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let trace = net.forward_sample(&x0, &mut rng).unwrap();
    let time = |f: &dyn Fn() -> GradientEstimate| {
        let mut best = Duration::MAX;
        for _ in 0..5 {
            let start = Instant::now();
            let mut sink = 0.0;
            for _ in 0..20 {
                sink += f().blocks[0].weights[0];
            }
            best = best.min(start.elapsed() / 20);
            std::hint::black_box(sink);
        }
        best
    };
    let psa = time(&|| psa_gradient(&net, &trace, 3, PsaOptions::default()).unwrap());
    let st = time(&|| st_gradient(&net, &trace, 3).unwrap());
    let ratio = psa.as_secs_f64() / st.as_secs_f64();
    Outcome::new(ratio <= 10.0, format!("psa {psa:.2?}, st {st:.2?} per call, ratio {ratio:.2} (gate 10)"))
}

fn main() {
    let data = toy_data();
    let mut results: Vec<(usize, &str, Outcome, Duration, Option<Duration>)> = Vec::new();
    let mut run = |id: usize, name: &'static str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let status = if out.pass && limit.is_none_or(|l| elapsed <= l) { "PASS" } else { "FAIL" };
        let limit_note = limit.map_or(String::new(), |l| format!(", limit {:.0?}", l));
        println!("{status} [{id:>2}] {name}: {} ({elapsed:.1?}{limit_note})", out.summary);
        for d in &out.details {
            println!("          {d}");
        }
        results.push((id, name, out, elapsed, limit));
    };

    run(1, "oracle vs finite differences", Some(Duration::from_secs(10)), &mut c1_oracle_fd);
    run(2, "single-layer exactness", None, &mut c2_single_layer);
    run(3, "unbiasedness with single-unit hidden layers", Some(Duration::from_secs(60)), &mut c3_chain_unbiased);
    run(4, "last-hidden-layer unbiasedness", None, &mut || c4_last_hidden_unbiased(&data));
    run(5, "reinforce unbiasedness", None, &mut c5_reinforce_unbiased);

    let mut banks: Option<FrozenBanks> = None;
    run(6, "variance dominance psa vs reinforce", Some(Duration::from_secs(300)), &mut || {
        let net = frozen_point(&data);
        let truth = ExactOracle::default().batch_gradient(&net, &data).unwrap();
        let psa = collect_samples(&net, Estimator::Psa, &data, 10_000, 61).unwrap();
        let reinforce = collect_samples(&net, Estimator::Reinforce, &data, 10_000, 62).unwrap();
        let st = collect_samples(&net, Estimator::St, &data, 10_000, 63).unwrap();
        let hardst = collect_samples(&net, Estimator::HardSt, &data, 10_000, 64).unwrap();
        let b = FrozenBanks { truth, psa, reinforce, st, hardst };
        let out = c6_variance_dominance(&b);
        banks = Some(b);
        out
    });
    run(7, "unbiased slope law and bias floor", None, &mut || c7_slope_and_floor(&data));
    run(8, "st exact in the linear regime", None, &mut c8_st_linear_exact);
    let banks = banks.expect("criterion 6 builds the banks");
    run(9, "st vs hardst direction quality", None, &mut || c9_st_vs_hardst(&banks));
    run(10, "conv discrete Jacobian equivalence", None, &mut c10_conv_delta);
    run(11, "last-layer enhancement", None, &mut c11_enhancement);
    run(12, "toy training", Some(Duration::from_secs(600)), &mut || c12_training(&data));
    run(13, "psa vs st cost", None, &mut c13_complexity);

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, _, o, e, l)| !o.pass || l.is_some_and(|l| *e > l))
        .map(|r| r.0)
        .collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
