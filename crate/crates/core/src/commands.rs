//! The experiments behind the `sbn` command-line tool, callable in-process.
//! Every command writes its resolved settings to `config.txt` next to its
//! outputs (when it has an output directory), so a run can be repeated with
//! `--config`.

use std::path::{Path, PathBuf};

use log::info;

use crate::config::ExperimentConfig;
use crate::data::{gen_toy_data, Dataset};
use crate::error::{Result, SbnError};
use crate::estimators::Estimator;
use crate::eval::{build_report, collect_samples, default_m_grid, rmse_curve, report_file_name, EstimatorReport};
use crate::netio;
use crate::network::{Network, NetworkSpec};
use crate::oracle::ExactOracle;
use crate::svg::{loglog_chart, Series};
use crate::train::{default_lr_grid, init_network, lr_grid_search, train, LrSearch, TrainConfig, TrainHistory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

pub fn exit_code(e: &SbnError) -> i32 {
    match e {
        SbnError::Capacity { .. } => EXIT_CAPACITY,
        SbnError::Divergence { .. } => EXIT_DIVERGENCE,
        SbnError::Domain(_) | SbnError::Parse { .. } | SbnError::Io { .. } => EXIT_CONFIG,
        SbnError::Shape { .. } | SbnError::Index { .. } | SbnError::Contract(_) => EXIT_INTERNAL,
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SbnError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| SbnError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct GenDataArgs {
    pub n: usize,
    pub seed: u64,
    pub band_height: f64,
    pub out: PathBuf,
}

pub fn gen_data(args: &GenDataArgs) -> Result<Dataset> {
    let data = gen_toy_data(args.n, args.seed, args.band_height)?;
    data.write_csv(&args.out)?;
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct InitNetArgs {
    pub input: usize,
    pub layers: Vec<usize>,
    pub classes: usize,
    pub seed: u64,
    /// Whitening batch; `None` skips whitening.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
}

fn check_layers(layers: &[usize]) -> Result<()> {
    if layers.is_empty() || layers.contains(&0) {
        return Err(SbnError::Domain(format!("layer widths must be nonempty and positive, got {layers:?}")));
    }
    Ok(())
}

pub fn init_net(args: &InitNetArgs) -> Result<Network> {
    check_layers(&args.layers)?;
    let spec = NetworkSpec::dense(args.input, &args.layers, args.classes);
    let data = args.data.as_ref().map(Dataset::read_csv).transpose()?;
    let net = init_network(&spec, args.seed, data.as_ref())?;
    netio::save(&net, &args.out)?;
    Ok(net)
}

#[derive(Debug, Clone)]
pub struct EvalGradArgs {
    pub net: PathBuf,
    pub data: PathBuf,
    pub estimators: Vec<Estimator>,
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Defaults to the network file's stem.
    pub point_id: Option<String>,
    /// Defaults to powers of two up to `samples / 2`.
    pub m_grid: Option<Vec<usize>>,
    pub width_cap: usize,
}

impl EvalGradArgs {
    fn point_id(&self) -> String {
        self.point_id.clone().unwrap_or_else(|| {
            self.net
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "point".into())
        })
    }

    pub fn to_config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.set("net", self.net.display().to_string());
        c.set("data", self.data.display().to_string());
        c.set("estimator", join(&self.estimators));
        c.set("samples", self.samples.to_string());
        c.set("seed", self.seed.to_string());
        c.set("out", self.out.display().to_string());
        c.set("point-id", self.point_id());
        if let Some(ms) = &self.m_grid {
            c.set("m-grid", join(ms));
        }
        c.set("width-cap", self.width_cap.to_string());
        c
    }
}

/// Exact batch gradient, then a sample bank and report per estimator.
/// Writes `{point_id}_{estimator}.csv` per estimator and one RMSE chart per
/// layer, `{point_id}_rmse_layer{k}.svg`.
pub fn eval_grad(args: &EvalGradArgs) -> Result<Vec<EstimatorReport>> {
    if args.estimators.is_empty() {
        return Err(SbnError::Domain("no estimators requested".into()));
    }
    if args.samples == 0 {
        return Err(SbnError::Domain("--samples must be at least 1".into()));
    }
    let net = netio::load(&args.net)?;
    let data = Dataset::read_csv(&args.data)?;
    let truth = ExactOracle::new(args.width_cap).batch_gradient(&net, &data)?;
    let point_id = args.point_id();
    let ms = args.m_grid.clone().unwrap_or_else(|| default_m_grid(args.samples));
    if let Some(&bad) = ms.iter().find(|&&m| m == 0 || m > args.samples) {
        return Err(SbnError::Domain(format!("group size {bad} outside 1..={}", args.samples)));
    }
    create_dir(&args.out)?;
    write_text(&args.out.join("config.txt"), &args.to_config().to_text())?;

    let blocks = truth.blocks.len();
    let mut charts: Vec<Vec<Series>> = vec![Vec::new(); blocks];
    let mut reports = Vec::new();
    for &est in &args.estimators {
        info!("collecting {} samples for {est}", args.samples);
        let mut bank = collect_samples(&net, est, &data, args.samples, args.seed)?;
        bank.point_id = point_id.clone();
        let report = build_report(&bank, &truth, &ms)?;
        report.write_csv(args.out.join(report_file_name(&point_id, est.name())))?;
        for (block, chart) in charts.iter_mut().enumerate() {
            if truth.blocks[block].norm_sq() == 0.0 {
                continue;
            }
            let curve = rmse_curve(&bank, &truth, &ms, block)?;
            chart.push(Series {
                name: est.name().into(),
                points: curve.iter().map(|p| (p.m as f64, p.rmse_rel)).collect(),
            });
        }
        reports.push(report);
    }
    for (block, series) in charts.iter().enumerate() {
        if series.is_empty() {
            continue;
        }
        let title = format!("{point_id}: {}", net.block_name(block));
        let svg = loglog_chart(&title, "samples M", "RMSE / |g|", series);
        write_text(&args.out.join(format!("{point_id}_rmse_layer{}.svg", block + 1)), &svg)?;
    }
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: PathBuf,
    /// Starting network; when absent a whitened network with `layers` is
    /// initialized from `seed`.
    pub net: Option<PathBuf>,
    pub layers: Vec<usize>,
    pub estimator: Estimator,
    pub lr: Option<f64>,
    pub auto_lr: bool,
    pub probe_epochs: usize,
    pub epochs: usize,
    /// `None` means full batch.
    pub batch: Option<usize>,
    pub momentum: f64,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: TrainHistory,
    pub lr: f64,
    pub search: Option<LrSearch>,
}

impl TrainArgs {
    pub fn to_config(&self, chosen_lr: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.set("data", self.data.display().to_string());
        match &self.net {
            Some(p) => c.set("net", p.display().to_string()),
            None => c.set("layers", join(&self.layers)),
        }
        c.set("estimator", self.estimator.name());
        c.set("lr", crate::data::fmt_f64(chosen_lr));
        c.set("epochs", self.epochs.to_string());
        if let Some(b) = self.batch {
            c.set("batch", b.to_string());
        }
        c.set("momentum", crate::data::fmt_f64(self.momentum));
        c.set("seed", self.seed.to_string());
        c.set("out", self.out.display().to_string());
        c
    }
}

/// Writes `history.csv`, `network.txt`, `config.txt` (with the learning
/// rate actually used) and, with `auto_lr`, `lr_search.csv`.
pub fn train_cmd(args: &TrainArgs) -> Result<TrainOutcome> {
    let data = Dataset::read_csv(&args.data)?;
    if data.is_empty() {
        return Err(SbnError::Domain("training data is empty".into()));
    }
    let start = match &args.net {
        Some(p) => netio::load(p)?,
        None => {
            check_layers(&args.layers)?;
            let input = data.inputs[0].len();
            let classes = data.labels.iter().max().map_or(2, |&m| (m + 1).max(2));
            init_network(&NetworkSpec::dense(input, &args.layers, classes), args.seed, Some(&data))?
        }
    };
    let mut cfg = TrainConfig::new(args.estimator, args.lr.unwrap_or(0.0), args.epochs, args.seed);
    cfg.batch_size = args.batch;
    cfg.momentum = args.momentum;

    create_dir(&args.out)?;
    let search = if args.auto_lr {
        let s = lr_grid_search(&start, &data, &cfg, &default_lr_grid(), args.probe_epochs)?;
        let mut csv = String::from("lr,score\n");
        for (lr, score) in &s.scores {
            csv.push_str(&format!("{},{}\n", crate::data::fmt_f64(*lr), crate::data::fmt_f64(*score)));
        }
        write_text(&args.out.join("lr_search.csv"), &csv)?;
        cfg.lr = s.best_lr;
        Some(s)
    } else {
        match args.lr {
            Some(_) => None,
            None => return Err(SbnError::Domain("either --lr or --auto-lr is required".into())),
        }
    };
    write_text(&args.out.join("config.txt"), &args.to_config(cfg.lr).to_text())?;

    let (network, history) = train(&start, &data, &cfg)?;
    history.write_csv(args.out.join("history.csv"))?;
    netio::save(&network, args.out.join("network.txt"))?;
    Ok(TrainOutcome {
        network,
        history,
        lr: cfg.lr,
        search,
    })
}
