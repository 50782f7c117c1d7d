//! Shared conventions for the tab-separated file formats.
//!
//! Reals are rendered with 9 significant digits in exponent form. Values that
//! are meant to round-trip through a file are quantized with [`quantize`] when
//! they are produced, so `parse(render(x)) == x` holds bit for bit.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

pub fn fmt_real(x: f64) -> String {
    format!("{x:.8e}")
}

/// Round to the value that [`fmt_real`] renders.
pub fn quantize(x: f64) -> f64 {
    fmt_real(x).parse().expect("rendered real parses")
}

/// Split a data line into exactly `n` tab-separated fields.
pub fn fields(line: &str, n: usize, line_no: usize) -> Result<Vec<&str>, ParseError> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != n {
        return Err(ParseError::new(
            line_no,
            format!("expected {n} fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

pub fn parse_real(s: &str, name: &str, line_no: usize) -> Result<f64, ParseError> {
    let v: f64 = s
        .parse()
        .map_err(|_| ParseError::new(line_no, format!("{name}: not a real: {s:?}")))?;
    if !v.is_finite() {
        return Err(ParseError::new(line_no, format!("{name}: not finite")));
    }
    Ok(v)
}

pub fn parse_nonneg(s: &str, name: &str, line_no: usize) -> Result<f64, ParseError> {
    let v = parse_real(s, name, line_no)?;
    if v < 0.0 {
        return Err(ParseError::new(line_no, format!("{name}: negative value {v}")));
    }
    Ok(v)
}

pub fn parse_int<T: std::str::FromStr>(s: &str, name: &str, line_no: usize) -> Result<T, ParseError> {
    s.parse()
        .map_err(|_| ParseError::new(line_no, format!("{name}: not an integer: {s:?}")))
}
