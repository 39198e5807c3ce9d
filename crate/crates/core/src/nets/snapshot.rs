//! Plain-text parameter snapshots.
//!
//! ```text
//! mlp <layers>
//! layer <out> <in> <activation>
//! w <out*in values, row-major>
//! b <out values>
//! ...
//! ```
//!
//! Layers are written input to output, weights before biases. Values use
//! Rust's shortest round-trip float formatting, so a write/read cycle is
//! lossless.

use std::io::{BufRead, Write};

use super::mlp::{Activation, Layer, MlpParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

pub fn write_values(w: &mut impl Write, tag: &str, values: &[f64]) -> Result<()> {
    write!(w, "{tag}")?;
    for v in values {
        write!(w, " {v}")?;
    }
    writeln!(w)?;
    Ok(())
}

pub fn write_mlp(w: &mut impl Write, mlp: &MlpParams) -> Result<()> {
    writeln!(w, "mlp {}", mlp.layers().len())?;
    for l in mlp.layers() {
        write_layer(w, l)?;
    }
    Ok(())
}

pub fn write_layer(w: &mut impl Write, l: &Layer) -> Result<()> {
    writeln!(w, "layer {} {} {}", l.outputs(), l.inputs(), l.activation.name())?;
    write_values(w, "w", l.weight.data())?;
    write_values(w, "b", l.bias.data())
}

/// Line reader that skips blank lines.
pub struct SnapshotReader<R> {
    inner: R,
    line: String,
}

impl<R: BufRead> SnapshotReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: String::new(),
        }
    }

    pub fn next_line(&mut self) -> Result<Vec<String>> {
        loop {
            self.line.clear();
            if self.inner.read_line(&mut self.line)? == 0 {
                return parse_err("unexpected end of snapshot");
            }
            let t = self.line.trim();
            if !t.is_empty() {
                return Ok(t.split_whitespace().map(str::to_owned).collect());
            }
        }
    }

    /// Reads a `<tag> v v v` line with exactly `n` values.
    pub fn values(&mut self, tag: &str, n: usize) -> Result<Vec<f64>> {
        let toks = self.next_line()?;
        if toks.first().map(String::as_str) != Some(tag) {
            return parse_err(format!("expected `{tag}` line, found {:?}", toks.first()));
        }
        let vals = toks[1..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return parse_err(format!("`{tag}` line has {} values, expected {n}", vals.len()));
        }
        Ok(vals)
    }

    pub fn header(&mut self, tag: &str) -> Result<Vec<String>> {
        let toks = self.next_line()?;
        if toks.first().map(String::as_str) != Some(tag) {
            return parse_err(format!("expected `{tag}`, found {:?}", toks.first()));
        }
        Ok(toks[1..].to_vec())
    }

    pub fn layer(&mut self) -> Result<Layer> {
        let h = self.header("layer")?;
        if h.len() != 3 {
            return parse_err("layer header needs `out in activation`");
        }
        let out: usize = h[0].parse().map_err(|_| Error::Parse(format!("bad width {}", h[0])))?;
        let inp: usize = h[1].parse().map_err(|_| Error::Parse(format!("bad width {}", h[1])))?;
        let act = Activation::parse(&h[2])
            .ok_or_else(|| Error::Parse(format!("unknown activation {}", h[2])))?;
        let w = self.values("w", out * inp)?;
        let b = self.values("b", out)?;
        Layer::new(Tensor::matrix(out, inp, w)?, Tensor::vector(b), act)
    }

    pub fn mlp(&mut self) -> Result<MlpParams> {
        let h = self.header("mlp")?;
        let n: usize = h
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse("mlp header needs a layer count".into()))?;
        let layers = (0..n).map(|_| self.layer()).collect::<Result<Vec<_>>>()?;
        MlpParams::new(layers)
    }
}

pub fn read_mlp(r: impl BufRead) -> Result<MlpParams> {
    SnapshotReader::new(r).mlp()
}
