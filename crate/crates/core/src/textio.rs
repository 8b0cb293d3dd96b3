//! Line-oriented `key = value` text helpers shared by the model and
//! measurement-matrix formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the value written.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn fmt_list(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (k, v) in values.into_iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        write!(out, "{v:e}").unwrap();
    }
    out
}

pub fn fmt_matrix_row_major(m: &DMatrix<f64>) -> String {
    fmt_list((0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])))
}

/// One non-blank, non-comment line split at the first `=`.
#[derive(Debug, Clone, Copy)]
pub struct Entry<'a> {
    pub line: usize,
    pub key: &'a str,
    pub value: &'a str,
}

impl<'a> Entry<'a> {
    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    pub fn f64(&self) -> Result<f64> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("`{}`: expected a number, got `{}`", self.key, self.value)))
    }

    pub fn usize(&self) -> Result<usize> {
        self.value.parse().map_err(|_| {
            self.error(format!(
                "`{}`: expected a nonnegative integer, got `{}`",
                self.key, self.value
            ))
        })
    }

    pub fn u64(&self) -> Result<u64> {
        self.value.parse().map_err(|_| {
            self.error(format!("`{}`: expected an unsigned integer, got `{}`", self.key, self.value))
        })
    }

    pub fn f64_list(&self) -> Result<Vec<f64>> {
        self.value
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| self.error(format!("`{}`: `{t}` is not a number", self.key)))
            })
            .collect()
    }

    pub fn usize_list(&self) -> Result<Vec<usize>> {
        self.value
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| {
                    self.error(format!("`{}`: `{t}` is not a nonnegative integer", self.key))
                })
            })
            .collect()
    }

    pub fn vector(&self, len: usize) -> Result<DVector<f64>> {
        let values = self.f64_list()?;
        if values.len() != len {
            return Err(self.error(format!(
                "`{}`: expected {len} values, got {}",
                self.key,
                values.len()
            )));
        }
        Ok(DVector::from_vec(values))
    }

    pub fn matrix_row_major(&self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let values = self.f64_list()?;
        if values.len() != rows * cols {
            return Err(self.error(format!(
                "`{}`: expected {} values for a {rows}x{cols} matrix, got {}",
                self.key,
                rows * cols,
                values.len()
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }
}

/// Splits `text` into `key = value` entries, skipping blank lines and `#`
/// comments. Line numbers are 1-based and offset by `first_line - 1`.
pub fn entries(text: &str, first_line: usize) -> Result<Vec<Entry<'_>>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = first_line + k;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(Error::Parse {
            line,
            message: format!("expected `key = value`, got `{trimmed}`"),
        })?;
        out.push(Entry {
            line,
            key: key.trim(),
            value: value.trim(),
        });
    }
    Ok(out)
}

/// Text form of a dense matrix: `rows`, `cols`, then row-major `data`.
pub fn matrix_to_text(m: &DMatrix<f64>) -> String {
    format!(
        "rows = {}\ncols = {}\ndata = {}\n",
        m.nrows(),
        m.ncols(),
        fmt_matrix_row_major(m)
    )
}

pub fn matrix_from_text(text: &str, first_line: usize) -> Result<DMatrix<f64>> {
    let mut rows = None;
    let mut cols = None;
    let mut data = None;
    for e in entries(text, first_line)? {
        match e.key {
            "rows" => rows = Some(e.usize()?),
            "cols" => cols = Some(e.usize()?),
            "data" => data = Some(e),
            other => return Err(e.error(format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::Parse {
        line: first_line,
        message: format!("missing key `{k}`"),
    };
    let rows = rows.ok_or_else(|| missing("rows"))?;
    let cols = cols.ok_or_else(|| missing("cols"))?;
    data.ok_or_else(|| missing("data"))?.matrix_row_major(rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_text_round_trips_bit_exactly(
            rows in 1usize..5,
            cols in 1usize..5,
            values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 16),
        ) {
            let m = DMatrix::from_fn(rows, cols, |i, j| values[(i * cols + j) % values.len()]);
            let back = matrix_from_text(&matrix_to_text(&m), 1).unwrap();
            prop_assert_eq!(m.shape(), back.shape());
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn reports_line_numbers() {
        let err = matrix_from_text("rows = 2\ncols = x\n", 10).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 11, .. }), "{err}");
    }
}
