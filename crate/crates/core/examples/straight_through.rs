//! ST vs HardST vs PSA on a single sampled trace, and the linear-head case
//! where ST is exact per sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sbn::estimators::{hardst_gradient, psa_gradient, st_gradient, PsaOptions};
use sbn::oracle::enumerate_gradient;
use sbn::train::init_uniform;
use sbn::{HeadLoss, NetworkSpec};

fn main() -> sbn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x0 = [0.3, -0.8];

    let net = init_uniform(&NetworkSpec::dense(2, &[4, 4], 2), 1)?;
    let trace = net.forward_sample(&x0, &mut rng)?;
    let exact = enumerate_gradient(&net, &x0, 0)?;
    println!("sampled states {:?}", trace.states);
    for (name, g) in [
        ("exact", exact),
        ("psa", psa_gradient(&net, &trace, 0, PsaOptions::default())?),
        ("st", st_gradient(&net, &trace, 0)?),
        ("hardst", hardst_gradient(&net, &trace, 0)?),
    ] {
        let b: Vec<String> = g.layer(0).bias.iter().map(|v| format!("{v:+.4}")).collect();
        println!("{name:<7} layer 1 bias gradient [{}]", b.join(", "));
    }

    let net = init_uniform(&NetworkSpec::dense(2, &[4], 2).with_loss(HeadLoss::Linear), 1)?;
    let exact = enumerate_gradient(&net, &x0, 0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = net.forward_sample(&x0, &mut rng)?;
        let st = st_gradient(&net, &t, 0)?;
        worst = worst.max(st.layer(0).iter().zip(exact.layer(0).iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    println!("linear head, one layer: max |st - exact| over 100 traces = {worst:.2e}");
    Ok(())
}
