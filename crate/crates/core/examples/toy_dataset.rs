//! Generates the two-class toy dataset and prints a coarse ASCII scatter.
//!
//! cargo run --example toy_dataset -- [n_per_class] [seed]

use sbn::gen_toy_data;
use sbn::data::DEFAULT_BAND_HEIGHT;

fn main() -> sbn::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = gen_toy_data(n, seed, DEFAULT_BAND_HEIGHT)?;

    let (cols, rows) = (60usize, 20usize);
    let (xmin, xmax) = bounds(data.inputs.iter().map(|p| p[0]));
    let (ymin, ymax) = bounds(data.inputs.iter().map(|p| p[1]));
    let mut grid = vec![vec![' '; cols]; rows];
    for (x, label) in data.iter() {
        let c = (((x[0] - xmin) / (xmax - xmin)) * (cols - 1) as f64).round() as usize;
        let r = (((ymax - x[1]) / (ymax - ymin)) * (rows - 1) as f64).round() as usize;
        grid[r][c] = if label == 0 { 'o' } else { 'x' };
    }
    for row in grid {
        println!("{}", row.into_iter().collect::<String>());
    }
    let counts = data.class_counts(2);
    println!("{} points: {} of class 0 (o), {} of class 1 (x)", data.len(), counts[0], counts[1]);
    Ok(())
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}
