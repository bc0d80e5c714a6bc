//! Versioned text format for networks.
//!
//! ```text
//! sbn-network 1
//! noise logistic
//! input <n>
//! dense <n_in> <n_out> ; <weights, row-major> ; <biases>
//! conv <c_in> <h_in> <w_in> <c_out> <k_h> <k_w> <stride> ; <kernel [o][c][u][v]> ; <biases per c_out>
//! head <n_in> <classes> <softmax-ce|linear> ; <weights, row-major> ; <biases>
//! ```
//!
//! One record per line, layer records in network order, the head record
//! last. Numbers inside a record are single-space separated hex floats
//! (see [`crate::hexfloat`]), so a save/load cycle is bit-exact. Blank lines
//! and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SbnError};
use crate::hexfloat;
use crate::layer::{ConvShape, Layer, LayerKind};
use crate::network::{Head, HeadLoss, Network};
use crate::noise::NoiseModel;
use crate::params::ParamBlock;

pub const FORMAT_MAGIC: &str = "sbn-network";
pub const FORMAT_VERSION: u32 = 1;

fn write_values(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&hexfloat::format(*v));
    }
}

fn write_params(out: &mut String, p: &ParamBlock) {
    out.push_str(" ; ");
    write_values(out, &p.weights);
    out.push_str(" ; ");
    write_values(out, &p.bias);
    out.push('\n');
}

pub fn to_text(net: &Network) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "noise {}", net.noise.name());
    let _ = writeln!(out, "input {}", net.input_len());
    for layer in &net.layers {
        match layer.kind() {
            LayerKind::Dense { inputs, outputs } => {
                let _ = write!(out, "dense {inputs} {outputs}");
            }
            LayerKind::Conv2d(s) => {
                let _ = write!(
                    out,
                    "conv {} {} {} {} {} {} {}",
                    s.in_channels, s.in_height, s.in_width, s.out_channels, s.kernel_h, s.kernel_w, s.stride
                );
            }
        }
        write_params(&mut out, &layer.params);
    }
    let _ = write!(
        out,
        "head {} {} {}",
        net.head.inputs(),
        net.head.classes(),
        net.head.loss.name()
    );
    write_params(&mut out, &net.head.params);
    out
}

fn parse_values(line: usize, field: &str) -> Result<Vec<f64>> {
    field
        .split_whitespace()
        .map(|tok| hexfloat::parse(tok).ok_or_else(|| SbnError::parse(line, format!("bad hex float {tok:?}"))))
        .collect()
}

fn parse_dims(line: usize, toks: &[&str]) -> Result<Vec<usize>> {
    toks.iter()
        .map(|t| t.parse::<usize>().map_err(|e| SbnError::parse(line, format!("bad dimension {t:?}: {e}"))))
        .collect()
}

pub fn from_text(text: &str) -> Result<Network> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (n, header) = lines.next().ok_or_else(|| SbnError::parse(1, "empty network file"))?;
    match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        [magic, version] if *magic == FORMAT_MAGIC => {
            if version.parse::<u32>().ok() != Some(FORMAT_VERSION) {
                return Err(SbnError::parse(n, format!("unsupported format version {version}")));
            }
        }
        _ => return Err(SbnError::parse(n, "missing sbn-network header")),
    }

    let mut noise = None;
    let mut input = None;
    let mut layers = Vec::new();
    let mut head = None;

    for (n, line) in lines {
        if head.is_some() {
            return Err(SbnError::parse(n, "records after the head"));
        }
        let mut fields = line.split(';');
        let desc: Vec<&str> = fields.next().unwrap_or("").split_whitespace().collect();
        let rest: Vec<&str> = fields.collect();
        let params = || -> Result<ParamBlock> {
            if rest.len() != 2 {
                return Err(SbnError::parse(n, "expected `; weights ; biases`"));
            }
            Ok(ParamBlock {
                weights: parse_values(n, rest[0])?,
                bias: parse_values(n, rest[1])?,
            })
        };
        let bad = |e: SbnError| SbnError::parse(n, e.to_string());
        match desc.as_slice() {
            ["noise", name] => {
                noise = Some(NoiseModel::from_name(name).ok_or_else(|| SbnError::parse(n, format!("unknown noise {name}")))?)
            }
            ["input", d] => input = Some(parse_dims(n, &[d])?[0]),
            ["dense", dims @ ..] if dims.len() == 2 => {
                let d = parse_dims(n, dims)?;
                let kind = LayerKind::Dense {
                    inputs: d[0],
                    outputs: d[1],
                };
                layers.push(Layer::with_params(kind, params()?).map_err(bad)?);
            }
            ["conv", dims @ ..] if dims.len() == 7 => {
                let d = parse_dims(n, dims)?;
                let shape = ConvShape {
                    in_channels: d[0],
                    in_height: d[1],
                    in_width: d[2],
                    out_channels: d[3],
                    kernel_h: d[4],
                    kernel_w: d[5],
                    stride: d[6],
                };
                layers.push(Layer::with_params(LayerKind::Conv2d(shape), params()?).map_err(bad)?);
            }
            ["head", i, k, loss] => {
                let d = parse_dims(n, &[i, k])?;
                let loss = HeadLoss::from_name(loss).ok_or_else(|| SbnError::parse(n, format!("unknown head loss {loss}")))?;
                head = Some(Head::new(d[0], d[1], loss, params()?).map_err(bad)?);
            }
            _ => return Err(SbnError::parse(n, format!("unrecognized record {:?}", desc.first().unwrap_or(&"")))),
        }
    }

    let input = input.ok_or_else(|| SbnError::parse(0, "missing input record"))?;
    let head = head.ok_or_else(|| SbnError::parse(0, "missing head record"))?;
    Network::new(input, layers, head, noise.unwrap_or_default())
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(net)).map_err(|e| SbnError::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SbnError::io(path, e))?;
    from_text(&text)
}
