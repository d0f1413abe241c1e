//! File formats for artifacts: Matrix Market dense arrays (real and
//! complex) and CSV with full double precision.

use crate::error::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Full-precision decimal formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn write_mm_real(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            writeln!(w, "{}", fmt_f64(m[(i, j)]))?;
        }
    }
    Ok(())
}

pub fn write_mm_complex(path: &Path, m: &Array2<Complex64>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array complex general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            writeln!(w, "{} {}", fmt_f64(z.re), fmt_f64(z.im))?;
        }
    }
    Ok(())
}

fn read_mm_header(path: &Path, kind: &str) -> Result<(BufReader<std::fs::File>, usize, usize)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = line.trim().to_lowercase();
    if !header.starts_with("%%matrixmarket matrix array") || !header.contains(kind) {
        return Err(Error::Serialization(format!(
            "unexpected matrix market header in {}: {header}",
            path.display()
        )));
    }
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Serialization("truncated matrix market file".into()));
        }
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let nrows: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Serialization("bad size line".into()))?;
        let ncols: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Serialization("bad size line".into()))?;
        return Ok((r, nrows, ncols));
    }
}

pub fn read_mm_real(path: &Path) -> Result<Array2<f64>> {
    let (r, nrows, ncols) = read_mm_header(path, "real")?;
    let mut m = Array2::zeros((nrows, ncols));
    let mut values = Vec::with_capacity(nrows * ncols);
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|e| Error::Serialization(format!("bad value '{t}': {e}")))?,
        );
    }
    if values.len() != nrows * ncols {
        return Err(Error::Serialization("matrix market entry count mismatch".into()));
    }
    for (k, v) in values.into_iter().enumerate() {
        m[(k % nrows, k / nrows)] = v;
    }
    Ok(m)
}

pub fn read_mm_complex(path: &Path) -> Result<Array2<Complex64>> {
    let (r, nrows, ncols) = read_mm_header(path, "complex")?;
    let mut m = Array2::zeros((nrows, ncols));
    let mut values = Vec::with_capacity(nrows * ncols);
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let re: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Serialization(format!("bad complex line '{t}'")))?;
        let im: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Serialization(format!("bad complex line '{t}'")))?;
        values.push(Complex64::new(re, im));
    }
    if values.len() != nrows * ncols {
        return Err(Error::Serialization("matrix market entry count mismatch".into()));
    }
    for (k, v) in values.into_iter().enumerate() {
        m[(k % nrows, k / nrows)] = v;
    }
    Ok(m)
}

/// CSV writer with a header row; fields are written verbatim.
pub struct CsvWriter {
    w: BufWriter<std::fs::File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{}", header.join(","))?;
        Ok(Self { w })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.w, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}
