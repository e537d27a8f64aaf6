//! CSV output with a fixed number format.

use std::io::Write;

use crate::error::{CliError, Result};

/// Rounds to 9 significant digits and prints the shortest form that
/// reads back to the rounded value, in exponent form for very small or
/// large magnitudes.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    if mag != 0.0 && !(1e-4..1e12).contains(&mag) {
        format!("{rounded:e}")
    } else {
        rounded.to_string()
    }
}

/// Blank for a missing value.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// A CSV writer that checks every row against the header width.
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
    width: usize,
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("writing CSV: {e}"))
}

impl<W: Write> CsvOut<W> {
    pub fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(header).map_err(csv_err)?;
        Ok(Self {
            inner,
            width: header.len(),
        })
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        assert_eq!(fields.len(), self.width, "CSV row width differs from the header");
        self.inner.write_record(fields).map_err(csv_err)
    }

    pub fn numbers(&mut self, values: &[f64]) -> Result<()> {
        let fields: Vec<String> = values.iter().map(|v| fmt_num(*v)).collect();
        self.row(&fields)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(csv_err)
    }
}
