//! Plain-text serialization of fitted GLLiM parameters.
//!
//! ```text
//! gllim 1
//! kind inverse
//! constraint full
//! K 2
//! theta_dim 2
//! data_dim 3
//! [component 1]
//! weight 0.5
//! c 0.1 -0.2
//! Gamma 1 0 0 1
//! A ...
//! b ...
//! Sigma ...
//! ```
//!
//! Matrices are written row-major on one line. Numbers use the shortest
//! representation that parses back to the same `f64`, so a write/read cycle
//! is exact. For `kind forward`, `c`/`Gamma` live in data space and
//! `A`/`b`/`Sigma` in parameter space. Blank lines and `#` comments are
//! ignored.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::mixture::AffineComponent;
use super::{CovarianceConstraint, GllimForwardParams, GllimInverseParams};
use crate::error::{Error, Result};

const ORIGIN: &str = "gllim";

fn push_values<'a>(out: &mut String, key: &str, values: impl Iterator<Item = &'a f64>) {
    out.push_str(key);
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

fn push_matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
    out.push_str(key);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write!(out, " {}", m[(i, j)]).unwrap();
        }
    }
    out.push('\n');
}

fn write_text(kind: &str, constraint: CovarianceConstraint, theta_dim: usize, data_dim: usize, comps: &[AffineComponent]) -> String {
    let mut out = String::new();
    writeln!(out, "gllim 1").unwrap();
    writeln!(out, "kind {kind}").unwrap();
    writeln!(out, "constraint {constraint}").unwrap();
    writeln!(out, "K {}", comps.len()).unwrap();
    writeln!(out, "theta_dim {theta_dim}").unwrap();
    writeln!(out, "data_dim {data_dim}").unwrap();
    for (k, c) in comps.iter().enumerate() {
        writeln!(out, "[component {}]", k + 1).unwrap();
        writeln!(out, "weight {}", c.weight).unwrap();
        push_values(&mut out, "c", c.input_mean.iter());
        push_matrix(&mut out, "Gamma", &c.input_cov);
        push_matrix(&mut out, "A", &c.map);
        push_values(&mut out, "b", c.offset.iter());
        push_matrix(&mut out, "Sigma", &c.noise_cov);
    }
    out
}

pub fn inverse_to_text(inv: &GllimInverseParams) -> String {
    write_text("inverse", inv.constraint(), inv.param_dim(), inv.data_dim(), inv.components())
}

/// The forward model; `constraint` records the structure of the inverse
/// model it came from.
pub fn forward_to_text(fwd: &GllimForwardParams, constraint: CovarianceConstraint) -> String {
    write_text("forward", constraint, fwd.param_dim(), fwd.data_dim(), fwd.components())
}

/// Either parameterization read from text.
#[derive(Debug, Clone)]
pub enum ParsedGllim {
    Inverse(GllimInverseParams),
    Forward {
        params: GllimForwardParams,
        constraint: CovarianceConstraint,
    },
}

impl ParsedGllim {
    /// The inverse model, converting if the text held the forward one.
    pub fn into_inverse(self) -> Result<GllimInverseParams> {
        match self {
            ParsedGllim::Inverse(inv) => Ok(inv),
            ParsedGllim::Forward { params, constraint } => params.to_inverse(constraint),
        }
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        for (i, raw) in self.inner.by_ref() {
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Ok(t);
        }
        Err(Error::format(ORIGIN, self.line + 1, "unexpected end of input"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(ORIGIN, self.line, msg)
    }

    /// Reads `key v1 v2 ...` and checks the value count.
    fn values(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        let vals = parts
            .map(|p| p.parse::<f64>().map_err(|_| self.err(format!("bad number `{p}` in `{key}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != count {
            return Err(self.err(format!("`{key}` needs {count} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn word(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.word(key)?;
        v.parse().map_err(|_| self.err(format!("bad count `{v}` for `{key}`")))
    }
}

pub fn parse(text: &str) -> Result<ParsedGllim> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.word("gllim")? != "1" {
        return Err(lines.err("unsupported format version"));
    }
    let kind = lines.word("kind")?;
    let forward = match kind {
        "inverse" => false,
        "forward" => true,
        other => return Err(lines.err(format!("unknown kind `{other}`"))),
    };
    let constraint: CovarianceConstraint = lines
        .word("constraint")?
        .parse()
        .map_err(|e: Error| lines.err(e.to_string()))?;
    let k = lines.count("K")?;
    let l = lines.count("theta_dim")?;
    let d = lines.count("data_dim")?;
    let (input, output) = if forward { (d, l) } else { (l, d) };

    let mut comps = Vec::with_capacity(k);
    for idx in 1..=k {
        let header = lines.next_line()?;
        if header != format!("[component {idx}]") {
            return Err(lines.err(format!("expected `[component {idx}]`")));
        }
        let weight = lines.values("weight", 1)?[0];
        let c = lines.values("c", input)?;
        let gamma = lines.values("Gamma", input * input)?;
        let a = lines.values("A", output * input)?;
        let b = lines.values("b", output)?;
        let sigma = lines.values("Sigma", output * output)?;
        comps.push(AffineComponent {
            weight,
            input_mean: DVector::from_vec(c),
            input_cov: DMatrix::from_row_slice(input, input, &gamma),
            map: DMatrix::from_row_slice(output, input, &a),
            offset: DVector::from_vec(b),
            noise_cov: DMatrix::from_row_slice(output, output, &sigma),
        });
    }
    if let Ok(extra) = lines.next_line() {
        return Err(lines.err(format!("trailing content `{extra}`")));
    }
    let at = lines.line;
    let wrap = |e: Error| Error::format(ORIGIN, at, e.to_string());
    if forward {
        Ok(ParsedGllim::Forward {
            params: GllimForwardParams::new(comps).map_err(wrap)?,
            constraint,
        })
    } else {
        Ok(ParsedGllim::Inverse(GllimInverseParams::new(comps, constraint).map_err(wrap)?))
    }
}

pub fn parse_inverse(text: &str) -> Result<GllimInverseParams> {
    parse(text)?.into_inverse()
}
