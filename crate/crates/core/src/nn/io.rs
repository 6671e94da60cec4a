//! Plain-text weight format.
//!
//! ```text
//! nodelab-mlp 1
//! activation relu
//! dims 2 48 48 2
//! weight 0 48 2
//! <48 lines of 2 values>
//! bias 0 1 48
//! <1 line of 48 values>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a write/read
//! cycle reproduces every weight bit-exactly.

use std::fmt::Write as _;
use std::str::{FromStr, Lines};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};
use crate::scalar::Scalar;

pub const MLP_MAGIC: &str = "nodelab-mlp";
pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn write_tensor<T: Scalar>(out: &mut String, tag: &str, index: usize, t: &Tensor<T>) {
    let _ = writeln!(out, "{tag} {index} {} {}", t.rows(), t.cols());
    for r in 0..t.rows() {
        let row: Vec<String> = t.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn write_mlp<T: Scalar>(mlp: &Mlp<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MLP_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "activation relu");
    let dims: Vec<String> = mlp.spec().dims.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "dims {}", dims.join(" "));
    for (i, layer) in mlp.layers().iter().enumerate() {
        write_tensor(&mut out, "weight", i, &layer.weight);
        write_tensor(&mut out, "bias", i, &layer.bias);
    }
    out.push_str("end\n");
    out
}

/// Line cursor shared by the weight and checkpoint readers.
pub(crate) struct TextReader<'a> {
    lines: Lines<'a>,
    line_no: usize,
    context: &'static str,
}

impl<'a> TextReader<'a> {
    pub(crate) fn new(text: &'a str, context: &'static str) -> Self {
        TextReader {
            lines: text.lines(),
            line_no: 0,
            context,
        }
    }

    pub(crate) fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::parse(format!("{} line {}", self.context, self.line_no), msg.to_string())
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        loop {
            self.line_no += 1;
            match self.lines.next() {
                None => return Err(self.err("unexpected end of input")),
                Some(l) if l.trim().is_empty() || l.trim_start().starts_with('#') => continue,
                Some(l) => return Ok(l.trim()),
            }
        }
    }

    /// Reads a line `keyword v1 v2 ...` and returns the values.
    pub(crate) fn keyed(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == keyword => Ok(parts.collect()),
            other => Err(self.err(format!("expected `{keyword}`, found `{}`", other.unwrap_or("")))),
        }
    }

    pub(crate) fn parse<V: FromStr>(&self, token: &str) -> Result<V> {
        token.parse().map_err(|_| self.err(format!("cannot parse `{token}`")))
    }

    pub(crate) fn tensor<T: Scalar>(&mut self, tag: &str, index: usize) -> Result<Tensor<T>> {
        let header = self.keyed(tag)?;
        if header.len() != 3 {
            return Err(self.err(format!("`{tag}` needs index, rows, cols")));
        }
        let got: usize = self.parse(header[0])?;
        if got != index {
            return Err(self.err(format!("expected {tag} {index}, found {got}")));
        }
        let rows: usize = self.parse(header[1])?;
        let cols: usize = self.parse(header[2])?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(self.parse::<T>(tok)?);
            }
            if data.len() - before != cols {
                return Err(self.err(format!("expected {cols} values")));
            }
        }
        let t = Tensor::from_vec(rows, cols, data)?;
        if !t.all_finite() {
            return Err(self.err("non-finite weight"));
        }
        Ok(t)
    }
}

pub(crate) fn read_mlp_from<T: Scalar>(reader: &mut TextReader<'_>) -> Result<Mlp<T>> {
    let magic = reader.next_line()?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(MLP_MAGIC) {
        return Err(reader.err("missing nodelab-mlp header"));
    }
    let version: u32 = reader.parse(parts.next().unwrap_or(""))?;
    if version != FORMAT_VERSION {
        return Err(reader.err(format!("unsupported format version {version}")));
    }
    let act = reader.keyed("activation")?;
    if act != ["relu"] {
        return Err(reader.err(format!("unsupported activation {act:?}")));
    }
    let dims: Vec<usize> = reader
        .keyed("dims")?
        .iter()
        .map(|d| reader.parse(d))
        .collect::<Result<_>>()?;
    if dims.len() < 2 {
        return Err(reader.err("need at least two dims"));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (i, w) in dims.windows(2).enumerate() {
        let weight = reader.tensor("weight", i)?;
        let bias = reader.tensor("bias", i)?;
        if weight.shape() != (w[1], w[0]) {
            return Err(reader.err(format!(
                "weight {i} has shape {:?}, dims say {:?}",
                weight.shape(),
                (w[1], w[0])
            )));
        }
        layers.push(Linear::new(weight, bias)?);
    }
    reader.keyed("end")?;
    Mlp::from_layers(layers)
}

pub fn read_mlp<T: Scalar>(text: &str) -> Result<Mlp<T>> {
    read_mlp_from(&mut TextReader::new(text, "mlp"))
}
