//! Trains the 5-5-5 toy model with a few estimators, each at the learning
//! rate picked by a short grid search, and prints the smoothed expected loss.
//!
//! cargo run --release --example train_toy -- [epochs]

use sbn::train::{default_lr_grid, init_network, lr_grid_search, train, TrainConfig, DEFAULT_PROBE_EPOCHS};
use sbn::{gen_toy_data, Estimator, NetworkSpec};

fn main() -> sbn::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let data = gen_toy_data(100, 1, sbn::data::DEFAULT_BAND_HEIGHT)?;
    let init = init_network(&NetworkSpec::dense(2, &[5, 5, 5], 2), 2, Some(&data))?;

    for est in [Estimator::Psa, Estimator::St, Estimator::HardSt, Estimator::Tanh, Estimator::Reinforce] {
        let base = TrainConfig::new(est, 0.0, epochs, 0);
        let search = lr_grid_search(&init, &data, &base, &default_lr_grid(), DEFAULT_PROBE_EPOCHS)?;
        let cfg = TrainConfig { lr: search.best_lr, ..base };
        match train(&init, &data, &cfg) {
            Ok((_, history)) => {
                let smooth = history.smoothed_loss(0.9);
                let last = history.records.last().map_or(f64::NAN, |r| r.train_acc);
                println!(
                    "{:<10} lr {:.2e}  loss {:.4} -> {:.4}  accuracy {:.3}",
                    est.name(),
                    cfg.lr,
                    smooth.first().copied().unwrap_or(f64::NAN),
                    smooth.last().copied().unwrap_or(f64::NAN),
                    last
                );
            }
            Err(e) => println!("{:<10} lr {:.2e}  {e}", est.name(), cfg.lr),
        }
    }
    Ok(())
}
