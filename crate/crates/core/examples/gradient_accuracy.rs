//! RMSE of several estimators against the exact batch gradient at a freshly
//! initialized 5-5-5 network, as a function of the number of samples averaged.
//!
//! cargo run --release --example gradient_accuracy -- [T]

use sbn::eval::{collect_samples, cosine_stats, default_m_grid, rmse_curve};
use sbn::gen_toy_data;
use sbn::oracle::ExactOracle;
use sbn::train::init_network;
use sbn::{Estimator, NetworkSpec};

fn main() -> sbn::Result<()> {
    let t: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let data = gen_toy_data(100, 1, sbn::data::DEFAULT_BAND_HEIGHT)?;
    let net = init_network(&NetworkSpec::dense(2, &[5, 5, 5], 2), 2, Some(&data))?;
    let truth = ExactOracle::default().batch_gradient(&net, &data)?;
    let ms = default_m_grid(t);

    println!("layer 1, relative RMSE by M ({} samples per estimator)", t);
    print!("{:<14}", "M");
    for m in &ms {
        print!("{m:>10}");
    }
    println!("{:>12}", "cos(M=1)");
    for est in [Estimator::Psa, Estimator::PsaEnhanced, Estimator::St, Estimator::HardSt, Estimator::Tanh, Estimator::Reinforce, Estimator::ReinforceEwa] {
        let bank = collect_samples(&net, est, &data, t, 3)?;
        print!("{:<14}", est.name());
        for p in rmse_curve(&bank, &truth, &ms, 0)? {
            print!("{:>10.3e}", p.rmse_rel);
        }
        println!("{:>12.4}", cosine_stats(&bank, &truth, 1, 0)?.mean);
    }
    Ok(())
}
