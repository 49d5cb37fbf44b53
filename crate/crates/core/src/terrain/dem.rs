//! Georeferenced raster grids and ESRI ASCII (`.asc`) I/O.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{GpError, Result};
use crate::kernels::Point2;

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Row-major raster. Row 0 is the northernmost row; `xllcorner`/`yllcorner`
/// locate the outer lower-left corner of the grid in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl DemGrid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(GpError::InvalidInput(format!("grid must be non-empty ({ncols}x{nrows})")));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(GpError::InvalidInput(format!("cellsize must be positive (got {cellsize})")));
        }
        if !(xllcorner.is_finite() && yllcorner.is_finite() && nodata.is_finite()) {
            return Err(GpError::InvalidInput("grid header values must be finite".into()));
        }
        if values.len() != ncols * nrows {
            return Err(GpError::ShapeMismatch {
                expected: format!("{} values", ncols * nrows),
                actual: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GpError::InvalidInput(format!("non-finite grid value at index {i}")));
        }
        Ok(DemGrid {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata,
            values,
        })
    }

    /// Grid with the same geometry as `self` and the given values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        DemGrid::new(
            self.ncols,
            self.nrows,
            self.xllcorner,
            self.yllcorner,
            self.cellsize,
            self.nodata,
            values,
        )
    }

    pub fn filled(ncols: usize, nrows: usize, cellsize: f64, value: f64) -> Result<Self> {
        DemGrid::new(ncols, nrows, 0.0, 0.0, cellsize, DEFAULT_NODATA, vec![value; ncols * nrows])
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// World coordinates (meters) of the center of cell (row, col).
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        [
            self.xllcorner + (col as f64 + 0.5) * self.cellsize,
            self.yllcorner + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize,
        ]
    }

    /// Cell centers in row-major order.
    pub fn cell_centers(&self) -> Vec<Point2> {
        (0..self.nrows)
            .flat_map(|r| (0..self.ncols).map(move |c| (r, c)))
            .map(|(r, c)| self.cell_center(r, c))
            .collect()
    }

    pub fn same_geometry(&self, other: &DemGrid) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xllcorner == other.xllcorner
            && self.yllcorner == other.yllcorner
            && self.cellsize == other.cellsize
    }

    pub fn ensure_same_geometry(&self, other: &DemGrid, what: &str) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(GpError::ShapeMismatch {
                expected: self.geometry_string(),
                actual: format!("{} ({what})", other.geometry_string()),
            })
        }
    }

    fn geometry_string(&self) -> String {
        format!(
            "{}x{} grid at ({}, {}) cellsize {}",
            self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize
        )
    }

    /// Values that are not the nodata sentinel.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(move |v| !self.is_nodata(*v))
    }

    pub fn to_asc_string(&self) -> String {
        let mut s = String::with_capacity(32 * self.values.len() + 200);
        writeln!(s, "NCOLS {}", self.ncols).unwrap();
        writeln!(s, "NROWS {}", self.nrows).unwrap();
        writeln!(s, "XLLCORNER {}", fmt_full(self.xllcorner)).unwrap();
        writeln!(s, "YLLCORNER {}", fmt_full(self.yllcorner)).unwrap();
        writeln!(s, "CELLSIZE {}", fmt_full(self.cellsize)).unwrap();
        writeln!(s, "NODATA_VALUE {}", fmt_full(self.nodata)).unwrap();
        for row in self.values.chunks(self.ncols) {
            let mut first = true;
            for v in row {
                if !first {
                    s.push(' ');
                }
                first = false;
                s.push_str(&fmt_full(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_asc(text: &str) -> Result<Self> {
        parse_asc(text)
    }
}

/// 17 significant digits, enough to reproduce any f64 exactly.
fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

fn parse_asc(text: &str) -> Result<DemGrid> {
    let mut header: [Option<f64>; 6] = [None; 6];
    let mut lines = text.lines().enumerate().peekable();
    let mut x_is_center = false;
    let mut y_is_center = false;

    while let Some(&(lineno, line)) = lines.peek() {
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        let key_lc = key.to_ascii_lowercase();
        let slot = match key_lc.as_str() {
            "xllcenter" => {
                x_is_center = true;
                Some(2)
            }
            "yllcenter" => {
                y_is_center = true;
                Some(3)
            }
            k => HEADER_KEYS.iter().position(|h| *h == k),
        };
        let Some(slot) = slot else { break };
        let value = toks.next().ok_or_else(|| GpError::Parse {
            line: lineno + 1,
            message: format!("header key `{key}` has no value"),
        })?;
        let value: f64 = value.parse().map_err(|_| GpError::Parse {
            line: lineno + 1,
            message: format!("header `{key}` value `{value}` is not a number"),
        })?;
        header[slot] = Some(value);
        lines.next();
    }

    let get = |i: usize| {
        header[i].ok_or_else(|| GpError::Parse {
            line: 1,
            message: format!("missing header key `{}`", HEADER_KEYS[i].to_ascii_uppercase()),
        })
    };
    let ncols_f = get(0)?;
    let nrows_f = get(1)?;
    let mut xll = get(2)?;
    let mut yll = get(3)?;
    let cellsize = get(4)?;
    let nodata = get(5)?;
    let as_count = |v: f64, key: &str| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(GpError::Parse {
                line: 1,
                message: format!("{key} must be a positive integer (got {v})"),
            })
        }
    };
    let ncols = as_count(ncols_f, "NCOLS")?;
    let nrows = as_count(nrows_f, "NROWS")?;
    if x_is_center {
        xll -= 0.5 * cellsize;
    }
    if y_is_center {
        yll -= 0.5 * cellsize;
    }

    let expected = ncols * nrows;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 0;
    for (lineno, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| GpError::Parse {
                line: lineno + 1,
                message: format!("value `{tok}` is not a number"),
            })?;
            values.push(v);
        }
        last_line = lineno + 1;
    }
    if values.len() != expected {
        return Err(GpError::Parse {
            line: last_line,
            message: format!("expected {expected} values ({ncols}x{nrows}), found {}", values.len()),
        });
    }
    DemGrid::new(ncols, nrows, xll, yll, cellsize, nodata, values).map_err(|e| GpError::Parse {
        line: 1,
        message: e.to_string(),
    })
}

pub fn read_asc(path: impl AsRef<Path>) -> Result<DemGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GpError::io(path, e))?;
    parse_asc(&text)
}

pub fn write_asc(dem: &DemGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dem.to_asc_string()).map_err(|e| GpError::io(path, e))
}
