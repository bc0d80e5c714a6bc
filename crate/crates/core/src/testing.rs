use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{Network, NetworkSpec};

/// Dense net with every parameter uniform in `(-scale, scale)`.
pub(crate) fn random_net(seed: u64, input: usize, widths: &[usize], scale: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetworkSpec::dense(input, widths, 2).zeros().unwrap();
    for b in net.blocks_mut() {
        for v in b.iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
    net
}
