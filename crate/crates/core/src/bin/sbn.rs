use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sbn::commands::{self, EvalGradArgs, GenDataArgs, InitNetArgs, TrainArgs, EXIT_CONFIG};
use sbn::config::ExperimentConfig;
use sbn::data::DEFAULT_BAND_HEIGHT;
use sbn::oracle::DEFAULT_WIDTH_CAP;
use sbn::train::{DEFAULT_MOMENTUM, DEFAULT_PROBE_EPOCHS};
use sbn::Estimator;

#[derive(Parser, Debug)]
#[command(name = "sbn", version, about = "Gradient estimators for stochastic binary networks")]
#[command(args_override_self = true)]
struct Cli {
    /// key=value file with default flag values; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|t| t.trim().parse::<T>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

fn parse_usizes(s: &str) -> Result<Vec<usize>, String> {
    parse_list(s)
}

fn parse_estimators(s: &str) -> Result<Vec<Estimator>, String> {
    parse_list(s)
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse::<Estimator>().map_err(|e| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the two-class toy dataset as CSV (x,y,label)
    GenData {
        /// points per class
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BAND_HEIGHT)]
        band_height: f64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Initialize a dense network (uniform weights, optional whitening) and save it
    InitNet {
        #[arg(long, default_value_t = 2)]
        input: usize,
        /// hidden widths, comma separated
        #[arg(long, value_parser = parse_usizes, default_value = "5,5,5")]
        layers: std::vec::Vec<usize>,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// whiten preactivations over this dataset
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Measure estimator accuracy against the exact gradient at a frozen network
    EvalGrad {
        #[arg(long, value_name = "FILE")]
        net: PathBuf,
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// comma separated: exact, psa, psa-enh, st, hardst, tanh, reinforce, reinforce-ewa
        #[arg(long, value_parser = parse_estimators, default_value = "psa,st,reinforce")]
        estimator: std::vec::Vec<Estimator>,
        /// bank size T
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        point_id: Option<String>,
        /// comma separated group sizes M (default: powers of two up to T/2)
        #[arg(long, value_parser = parse_usizes)]
        m_grid: Option<std::vec::Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_WIDTH_CAP)]
        width_cap: usize,
    },
    /// Train with SGD + Nesterov momentum on one-sample gradient estimates
    Train {
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// starting network (default: fresh whitened init of --layers)
        #[arg(long, value_name = "FILE")]
        net: Option<PathBuf>,
        #[arg(long, value_parser = parse_usizes, default_value = "5,5,5")]
        layers: std::vec::Vec<usize>,
        #[arg(long, value_parser = parse_estimator, default_value = "psa")]
        estimator: Estimator,
        #[arg(long)]
        lr: Option<f64>,
        /// pick the learning rate by a grid search of short probe runs
        #[arg(long)]
        auto_lr: bool,
        #[arg(long, default_value_t = DEFAULT_PROBE_EPOCHS)]
        probe_epochs: usize,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        /// minibatch size (default: full batch)
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MOMENTUM)]
        momentum: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Splices the entries of `--config FILE` in right after the subcommand
/// name, ahead of the user's own flags.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let pos = args.iter().position(|a| a == "--config");
    let inline = args.iter().position(|a| a.to_string_lossy().starts_with("--config="));
    let path = match (pos, inline) {
        (Some(i), _) => args.get(i + 1).map(PathBuf::from).ok_or("--config needs a file")?,
        (None, Some(i)) => PathBuf::from(args[i].to_string_lossy().trim_start_matches("--config=").to_string()),
        (None, None) => return Ok(args),
    };
    let cfg = ExperimentConfig::load(&path).map_err(|e| e.to_string())?;
    let sub = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-') && Some(a.as_os_str()) != Some(path.as_os_str()))
        .map(|i| i + 1)
        .ok_or("missing subcommand")?;
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    out.extend(cfg.to_args().into_iter().map(OsString::from));
    out.extend(args[sub + 1..].iter().cloned());
    Ok(out)
}

fn run(cli: Cli) -> sbn::Result<()> {
    match cli.command {
        Command::GenData { n, seed, band_height, out } => {
            let data = commands::gen_data(&GenDataArgs { n, seed, band_height, out: out.clone() })?;
            let counts = data.class_counts(2);
            println!("wrote {} points ({} class 0, {} class 1) to {}", data.len(), counts[0], counts[1], out.display());
        }
        Command::InitNet { input, layers, classes, seed, data, out } => {
            let net = commands::init_net(&InitNetArgs { input, layers, classes, seed, data, out: out.clone() })?;
            println!("wrote network {:?} -> {} classes to {}", net.widths(), net.classes(), out.display());
        }
        Command::EvalGrad { net, data, estimator, samples, seed, out, point_id, m_grid, width_cap } => {
            let args = EvalGradArgs { net, data, estimators: estimator, samples, seed, out, point_id, m_grid, width_cap };
            for r in commands::eval_grad(&args)? {
                if let Some(first) = r.rows.iter().find(|row| row.layer == 1 && row.m == 1) {
                    println!("{:<14} layer 1, M = 1: rmse_rel {:.4e}, cos_mean {:.4}", first.estimator, first.rmse_rel, first.cos_mean);
                }
            }
            println!("reports in {}", args.out.display());
        }
        Command::Train { data, net, layers, estimator, lr, auto_lr, probe_epochs, epochs, batch, momentum, seed, out } => {
            let args = TrainArgs { data, net, layers, estimator, lr, auto_lr, probe_epochs, epochs, batch, momentum, seed, out };
            let outcome = commands::train_cmd(&args)?;
            if let Some(s) = &outcome.search {
                if s.all_diverged {
                    eprintln!("warning: every probed learning rate diverged");
                }
            }
            let last = outcome.history.records.last();
            println!(
                "trained {} epochs with lr {:e}; final expected loss {}",
                args.epochs,
                outcome.lr,
                last.map_or("n/a".into(), |r| format!("{:.5}", r.exp_loss_mc))
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
