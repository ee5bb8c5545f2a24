//! Plain-text writers shared by the CLI and the synthetic generators.
//!
//! Every float is written with 17 significant digits so that reading a file
//! back reproduces the exact `f64`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Square or rectangular matrix with a header of column ids and a leading
/// column of row ids.
pub fn write_matrix<W: Write>(
    m: &DMatrix<f64>,
    row_ids: &[String],
    col_ids: &[String],
    corner: &str,
    mut w: W,
) -> io::Result<()> {
    write!(w, "{corner}")?;
    for c in col_ids {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (r, id) in row_ids.iter().enumerate() {
        write!(w, "{id}")?;
        for c in 0..m.ncols() {
            write!(w, ",{}", fmt_f64(m[(r, c)]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_vector<W: Write>(v: &DVector<f64>, ids: &[String], header: (&str, &str), mut w: W) -> io::Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (id, x) in ids.iter().zip(v.iter()) {
        writeln!(w, "{id},{}", fmt_f64(*x))?;
    }
    Ok(())
}

/// `key=value` report lines in insertion order.
#[derive(Debug, Default, Clone)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.lines.push((key.to_string(), fmt_f64(v)));
        self
    }

    pub fn int(&mut self, key: &str, v: impl Into<i128>) -> &mut Self {
        self.lines.push((key.to_string(), v.into().to_string()));
        self
    }

    pub fn text(&mut self, key: &str, v: impl Into<String>) -> &mut Self {
        self.lines.push((key.to_string(), v.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (k, v) in &self.lines {
            writeln!(w, "{k}={v}")?;
        }
        Ok(())
    }
}
