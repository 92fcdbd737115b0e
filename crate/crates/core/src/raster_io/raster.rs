use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A north-up grid of values stored row-major, top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64) -> Result<Self> {
        let r = Raster { ncols, nrows, xll, yll, cellsize, nodata, values: vec![0.0; ncols * nrows] };
        r.validate()?;
        Ok(r)
    }

    pub fn filled(ncols: usize, nrows: usize, cellsize: f64, value: f64) -> Self {
        Raster { ncols, nrows, xll: 0.0, yll: 0.0, cellsize, nodata: -9999.0, values: vec![value; ncols * nrows] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(Error::Structure(format!("raster must be at least 1x1, got {}x{}", self.ncols, self.nrows)));
        }
        if !(self.cellsize > 0.0) {
            return Err(Error::Structure(format!("cellsize must be positive, got {}", self.cellsize)));
        }
        if self.values.len() != self.ncols * self.nrows {
            return Err(Error::Structure(format!(
                "raster holds {} values, expected {}x{} = {}",
                self.values.len(),
                self.ncols,
                self.nrows,
                self.ncols * self.nrows
            )));
        }
        Ok(())
    }

    /// Value at column `col`, row `row` (row 0 is the northern edge).
    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    /// Value addressed from the south-west corner: `j = 0` is the southern row.
    #[inline]
    pub fn get_sw(&self, i: usize, j: usize) -> f64 {
        self.get(i, self.nrows - 1 - j)
    }

    #[inline]
    pub fn set_sw(&mut self, i: usize, j: usize, v: f64) {
        let row = self.nrows - 1 - j;
        self.set(i, row, v);
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    pub fn same_geometry(&self, other: &Raster) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && (self.cellsize - other.cellsize).abs() <= 1e-9 * self.cellsize
            && (self.xll - other.xll).abs() <= 1e-6 * self.cellsize
            && (self.yll - other.yll).abs() <= 1e-6 * self.cellsize
    }

    pub fn shape(&self) -> String {
        format!("{}x{} @ ({}, {}) cellsize {}", self.ncols, self.nrows, self.xll, self.yll, self.cellsize)
    }
}

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

/// Parses an ESRI ASCII grid. Header keywords are case-insensitive.
pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ascii_grid(&text, &path.display().to_string())
}

pub(crate) fn parse_ascii_grid(text: &str, name: &str) -> Result<Raster> {
    let parse_err = |line: usize, msg: String| Error::Parse { path: name.to_string(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut header = [f64::NAN; 6];
    for (k, key) in HEADER_KEYS.iter().enumerate() {
        let (no, line) = lines
            .next()
            .ok_or_else(|| parse_err(k + 1, format!("missing header keyword `{key}`")))?;
        let mut toks = line.split_whitespace();
        let found = toks.next().unwrap_or_default();
        if !found.eq_ignore_ascii_case(key) {
            return Err(parse_err(no + 1, format!("expected header keyword `{key}`, found `{found}`")));
        }
        let value = toks
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| parse_err(no + 1, format!("header `{key}` needs a numeric value")))?;
        if toks.next().is_some() {
            return Err(parse_err(no + 1, format!("trailing tokens after `{key}`")));
        }
        header[k] = value;
    }
    let [ncols, nrows, xll, yll, cellsize, nodata] = header;
    if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(parse_err(1, format!("ncols/nrows must be positive integers, got {ncols} and {nrows}")));
    }
    let (ncols, nrows) = (ncols as usize, nrows as usize);
    let mut values = Vec::with_capacity(ncols * nrows);
    for (no, line) in lines {
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| parse_err(no + 1, format!("invalid number `{tok}`")))?;
            values.push(v);
        }
    }
    let raster = Raster { ncols, nrows, xll, yll, cellsize, nodata, values };
    raster.validate()?;
    Ok(raster)
}

/// Writes an ESRI ASCII grid with round-trip precision.
pub fn write_ascii_grid(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    raster.validate()?;
    fs::write(path, format_ascii_grid(raster)).map_err(|e| Error::io(path, e))
}

pub(crate) fn format_ascii_grid(r: &Raster) -> String {
    let mut out = String::with_capacity(r.values.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", r.ncols);
    let _ = writeln!(out, "nrows {}", r.nrows);
    let _ = writeln!(out, "xllcorner {:?}", r.xll);
    let _ = writeln!(out, "yllcorner {:?}", r.yll);
    let _ = writeln!(out, "cellsize {:?}", r.cellsize);
    let _ = writeln!(out, "NODATA_value {:?}", r.nodata);
    for row in r.values.chunks(r.ncols) {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let v = if r.is_nodata(v) { r.nodata } else { v };
            // `{:?}` is the shortest representation that parses back bit-exactly.
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}
