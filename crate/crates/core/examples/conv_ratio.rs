//! Discrete Jacobian of a convolutional layer: the direct per-kernel-offset
//! form against the ratio form, with timings on a larger feature map.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbn::estimators::{delta_conv_apply, ratio_conv_apply};
use sbn::{ConvShape, Head, Layer, Network, NoiseModel};

fn main() -> sbn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = ConvShape { in_channels: 8, in_height: 16, in_width: 16, out_channels: 8, kernel_h: 3, kernel_w: 3, stride: 1 };
    let n = shape.input_len();
    let mut rand_vec = |len: usize, s: f64| (0..len).map(|_| rng.gen_range(-s..s)).collect::<Vec<f64>>();
    let first = Layer::dense(4, n, rand_vec(4 * n, 1.0), rand_vec(n, 0.5))?;
    let conv = Layer::conv(shape, rand_vec(shape.kernel_len(), 0.5), rand_vec(shape.out_channels, 0.5))?;
    let net = Network::new(4, vec![first, conv], Head::zeros(shape.output_len(), 10)?, NoiseModel::Logistic)?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let trace = net.forward_sample(&[0.1, 0.2, -0.3, 0.4], &mut rng)?;
    let g: Vec<f64> = (0..shape.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let start = Instant::now();
    let direct = delta_conv_apply(&net, &trace, 1, &g)?;
    let t_direct = start.elapsed();
    let start = Instant::now();
    let ratio = ratio_conv_apply(&net, &trace, 1, &g)?;
    let t_ratio = start.elapsed();

    let diff = direct.iter().zip(&ratio).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{} inputs, {} outputs, kernel {}x{}x{}x{}", n, shape.output_len(), shape.out_channels, shape.in_channels, shape.kernel_h, shape.kernel_w);
    println!("direct {t_direct:.2?}, ratio {t_ratio:.2?}, max difference {diff:.2e}");
    Ok(())
}
