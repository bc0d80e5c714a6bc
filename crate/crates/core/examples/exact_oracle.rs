//! Exact expected loss and gradient of a small network by enumerating every
//! joint state, checked against central finite differences.

use sbn::oracle::{ExactOracle, DEFAULT_FD_STEP};
use sbn::train::init_uniform;
use sbn::NetworkSpec;

fn main() -> sbn::Result<()> {
    let net = init_uniform(&NetworkSpec::dense(2, &[3, 3, 3], 2), 7)?;
    let oracle = ExactOracle::default();
    let (x0, label) = ([0.5, -0.25], 1);

    println!("expected loss {:.6}", oracle.expected_loss(&net, &x0, label)?);
    let g = oracle.gradient(&net, &x0, label)?;
    let fd = oracle.finite_diff_gradient(&net, &x0, label, DEFAULT_FD_STEP)?;
    for (k, (a, b)) in g.blocks.iter().zip(&fd.blocks).enumerate() {
        let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!("{:<8} |g| = {:.4e}  max |g - fd| = {diff:.2e}", net.block_name(k), a.norm_sq().sqrt());
    }
    Ok(())
}
