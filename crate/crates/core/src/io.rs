//! CSV input and output.
//!
//! Inputs are either raw wage changes (a `growth` column, log points) or
//! binned counts (`bin_mid,prop,count`). Every file written here starts with a
//! `# format_version` comment, then a header row; numbers carry 17
//! significant digits so they read back exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::binprob::{BinCounts, BinGrid};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

/// Round-trip formatting with 17 significant digits; non-finite values are
/// written as empty fields.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

/// Optional value as a CSV field.
pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// Parsed input data.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Growth(Vec<f64>),
    Binned(BinCounts),
}

impl Input {
    /// Bin counts, binning raw growth on `grid` if needed.
    pub fn into_counts(self, grid: BinGrid) -> Result<BinCounts> {
        match self {
            Input::Growth(g) => BinCounts::from_growth(grid, &g),
            Input::Binned(c) => Ok(c),
        }
    }
}

fn parse_err(line: u64, reason: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        reason: reason.into(),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| parse_err(line_of(rec), format!("missing `{name}`")))?;
    raw.parse()
        .map_err(|_| parse_err(line_of(rec), format!("`{name}` value `{raw}` is not a number")))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(line, e.to_string())
}

/// Read either input format from CSV text.
pub fn parse_input<R: Read>(r: R) -> Result<Input> {
    let mut rd = reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    if let Some(g) = col("growth") {
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let v: f64 = field(&rec, g, "growth")?;
            if !v.is_finite() {
                return Err(parse_err(line_of(&rec), format!("non-finite growth value {v}")));
            }
            out.push(v);
        }
        if out.is_empty() {
            return Err(Error::invalid("input", "no observations"));
        }
        return Ok(Input::Growth(out));
    }
    let (Some(m), Some(p), Some(c)) = (col("bin_mid"), col("prop"), col("count")) else {
        return Err(parse_err(1, "header must contain `growth` or `bin_mid,prop,count`"));
    };
    let mut rows: Vec<(u64, f64, f64, u64)> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let mid: f64 = field(&rec, m, "bin_mid")?;
        let prop: f64 = field(&rec, p, "prop")?;
        let count: u64 = field(&rec, c, "count")?;
        if !(mid.is_finite() && prop.is_finite() && (0.0..=1.0).contains(&prop)) {
            return Err(parse_err(line_of(&rec), "bin_mid must be finite and prop in [0, 1]"));
        }
        rows.push((line_of(&rec), mid, prop, count));
    }
    binned_from_rows(&rows).map(Input::Binned)
}

fn binned_from_rows(rows: &[(u64, f64, f64, u64)]) -> Result<BinCounts> {
    if rows.len() < 2 {
        return Err(Error::invalid("input", "binned input needs at least two bins"));
    }
    let has_zero = rows.iter().any(|r| r.1 == 0.0);
    // width: smallest positive gap between consecutive midpoints
    let gap = rows
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return Err(parse_err(rows[1].0, "bin midpoints must be strictly increasing"));
    }
    // refine over the whole span so rounding in single gaps does not leak into the width
    let span = rows[rows.len() - 1].1 - rows[0].1;
    let width = span / (span / gap).round();
    let grid = BinGrid::new(rows[0].1, rows[rows.len() - 1].1, width, has_zero)?;
    if grid.len() != rows.len() {
        return Err(Error::BinMismatch(format!("{} rows for a {}-bin grid of width {width}", rows.len(), grid.len())));
    }
    for (&(line, mid, _, _), k) in rows.iter().zip(grid.indices()) {
        if (mid - k as f64 * width).abs() > 1e-6 * width {
            return Err(parse_err(line, format!("bin_mid {mid} is off the grid of width {width}")));
        }
    }
    // props are count / total, where total also counts observations off the grid
    let &(_, _, p, c) = rows
        .iter()
        .filter(|r| r.3 > 0)
        .max_by_key(|r| r.3)
        .ok_or_else(|| Error::Degenerate("all counts are zero".into()))?;
    if p <= 0.0 {
        return Err(Error::invalid("prop", "positive count with zero proportion"));
    }
    let total = (c as f64 / p).round() as u64;
    for &(line, _, p, c) in rows {
        if (c as f64 - p * total as f64).abs() > 0.5 + 1e-9 * total as f64 {
            return Err(parse_err(line, format!("count {c} inconsistent with prop {p} and total {total}")));
        }
    }
    BinCounts::new(grid, rows.iter().map(|r| r.3).collect(), total)
}

pub fn read_input(path: &Path) -> Result<Input> {
    parse_input(File::open(path)?)
}

/// Buffered CSV writer that emits the version comment and header.
pub struct CsvOut {
    w: BufWriter<File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# format_version: {FORMAT_VERSION}")?;
        writeln!(w, "{}", header.join(","))?;
        Ok(CsvOut { w })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        let mut first = true;
        for f in fields {
            if !first {
                self.w.write_all(b",")?;
            }
            self.w.write_all(f.as_ref().as_bytes())?;
            first = false;
        }
        self.w.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Write bin counts as `bin_mid,prop,count`.
pub fn write_binned(path: &Path, c: &BinCounts) -> Result<()> {
    let mut out = CsvOut::create(path, &["bin_mid", "prop", "count"])?;
    let d = c.to_distribution();
    for ((mid, p), n) in d.midpoints().into_iter().zip(&d.props).zip(&c.counts) {
        out.row(&[num(mid), num(*p), n.to_string()])?;
    }
    out.finish()
}

/// Write raw wage changes as a `growth` column.
pub fn write_growth(path: &Path, growth: &[f64]) -> Result<()> {
    let mut out = CsvOut::create(path, &["growth"])?;
    for &g in growth {
        out.row(&[num(g)])?;
    }
    out.finish()
}
