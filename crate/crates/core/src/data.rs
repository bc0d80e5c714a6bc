//! Labeled datasets and the two-class toy problem.
//!
//! Toy data: class 0 is uniform above `y = 0`, class 1 uniform below
//! `y = cos(x)`, with `x` in `[-pi/2, pi/2]`. Both classes are truncated to a
//! band of height `band_height`, so they overlap wherever `0 < y < cos(x)`.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::Rng;

use crate::error::{check_len, Result, SbnError};
use crate::rng::{self, Stream};

pub const DEFAULT_BAND_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub band_height: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub bounds: Option<ToyBounds>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        check_len("dataset labels", inputs.len(), labels.len())?;
        if let Some(first) = inputs.first() {
            let d = first.len();
            if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
                return Err(SbnError::Shape {
                    context: "dataset point",
                    expected: d,
                    got: bad.len(),
                });
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            bounds: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.inputs.iter().map(|v| v.as_slice()).zip(self.labels.iter().copied())
    }

    pub fn point(&self, i: usize) -> (&[f64], usize) {
        (&self.inputs[i], self.labels[i])
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            bounds: self.bounds,
        }
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Writes `x,y,label` rows (2-D datasets only) with round-trip precision.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["x", "y", "label"]).map_err(|e| csv_err(path, e))?;
        for (x, label) in self.iter() {
            if x.len() != 2 {
                return Err(SbnError::Shape {
                    context: "csv dataset point",
                    expected: 2,
                    got: x.len(),
                });
            }
            w.write_record([fmt_f64(x[0]), fmt_f64(x[1]), label.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| SbnError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = i + 2;
            if rec.len() != 3 {
                return Err(SbnError::parse(line, format!("expected 3 columns, got {}", rec.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| SbnError::parse(line, e.to_string()));
            inputs.push(vec![num(&rec[0])?, num(&rec[1])?]);
            labels.push(rec[2].trim().parse::<usize>().map_err(|e| SbnError::parse(line, e.to_string()))?);
        }
        Dataset::new(inputs, labels)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> SbnError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SbnError::io(path, io),
        other => SbnError::parse(0, format!("{}: {other:?}", path.display())),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Generates `n_per_class` points of each class from streams keyed by `seed`.
pub fn gen_toy_data(n_per_class: usize, seed: u64, band_height: f64) -> Result<Dataset> {
    if !(band_height > 0.0 && band_height.is_finite()) {
        return Err(SbnError::Domain(format!("band height must be positive, got {band_height}")));
    }
    let mut inputs = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    let mut rng = rng::stream(seed, Stream::Data, &[0]);
    for _ in 0..n_per_class {
        let x = rng.gen_range(-FRAC_PI_2..=FRAC_PI_2);
        // (0, h]
        let y = band_height * (1.0 - rng.gen::<f64>());
        inputs.push(vec![x, y]);
        labels.push(0);
    }
    for _ in 0..n_per_class {
        let x = rng.gen_range(-FRAC_PI_2..=FRAC_PI_2);
        // [cos x - h, cos x)
        let y = x.cos() - band_height + band_height * rng.gen::<f64>();
        let y = if y < x.cos() { y } else { x.cos().next_down() };
        inputs.push(vec![x, y]);
        labels.push(1);
    }
    Ok(Dataset {
        inputs,
        labels,
        bounds: Some(ToyBounds {
            x_min: -FRAC_PI_2,
            x_max: FRAC_PI_2,
            band_height,
        }),
    })
}
