//! Training samples extracted from grids, with z-score normalization.

use std::fmt::Write as _;
use std::path::Path;

use super::dem::DemGrid;
use crate::error::{GpError, Result};
use crate::kernels::Point2;

/// Per-axis input statistics plus target statistics. Variances are scaled
/// by `1 / y_std²` so they live in normalized target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub x_mean: [f64; 2],
    pub x_std: [f64; 2],
    pub y_mean: f64,
    pub y_std: f64,
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            x_mean: [0.0; 2],
            x_std: [1.0; 2],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    /// Population mean/std of the inputs and targets. Zero spreads fall back to 1.
    pub fn fit(x: &[Point2], y: &[f64]) -> Self {
        let (xm0, xs0) = mean_std(x.iter().map(|p| p[0]));
        let (xm1, xs1) = mean_std(x.iter().map(|p| p[1]));
        let (ym, ys) = mean_std(y.iter().copied());
        NormStats {
            x_mean: [xm0, xm1],
            x_std: [xs0, xs1],
            y_mean: ym,
            y_std: ys,
        }
    }

    #[inline]
    pub fn normalize_x(&self, p: &Point2) -> Point2 {
        [
            (p[0] - self.x_mean[0]) / self.x_std[0],
            (p[1] - self.x_mean[1]) / self.x_std[1],
        ]
    }

    #[inline]
    pub fn denormalize_x(&self, p: &Point2) -> Point2 {
        [
            p[0] * self.x_std[0] + self.x_mean[0],
            p[1] * self.x_std[1] + self.x_mean[1],
        ]
    }

    #[inline]
    pub fn normalize_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    #[inline]
    pub fn denormalize_y(&self, y: f64) -> f64 {
        y * self.y_std + self.y_mean
    }

    /// Factor converting normalized variances back to m².
    #[inline]
    pub fn variance_scale(&self) -> f64 {
        self.y_std * self.y_std
    }
}

fn mean_std(it: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = it.clone().count();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = it.clone().sum::<f64>() / n as f64;
    let var = it.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}

/// Normalized samples. `x`, `y`, and `r` are in normalized units; `stats`
/// maps them back to meters and m².
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Point2>,
    pub y: Vec<f64>,
    pub r: Option<Vec<f64>>,
    pub stats: NormStats,
}

impl Dataset {
    /// Normalize raw samples (meters, m²) with statistics fitted to them.
    pub fn from_raw(x: Vec<Point2>, y: Vec<f64>, r: Option<Vec<f64>>) -> Result<Self> {
        let stats = NormStats::fit(&x, &y);
        Self::from_raw_with_stats(x, y, r, stats)
    }

    pub fn from_raw_with_stats(
        x: Vec<Point2>,
        y: Vec<f64>,
        r: Option<Vec<f64>>,
        stats: NormStats,
    ) -> Result<Self> {
        if x.is_empty() {
            return Err(GpError::EmptyDataset("no samples".into()));
        }
        if x.len() != y.len() || r.as_ref().is_some_and(|r| r.len() != x.len()) {
            return Err(GpError::ShapeMismatch {
                expected: format!("{} samples", x.len()),
                actual: format!("{} targets", y.len()),
            });
        }
        let scale = stats.variance_scale();
        Ok(Dataset {
            x: x.iter().map(|p| stats.normalize_x(p)).collect(),
            y: y.iter().map(|v| stats.normalize_y(*v)).collect(),
            r: r.map(|r| r.into_iter().map(|v| v / scale).collect()),
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            r: self.r.as_ref().map(|r| idx.iter().map(|&i| r[i]).collect()),
            stats: self.stats,
        }
    }

    pub fn raw_x(&self) -> Vec<Point2> {
        self.x.iter().map(|p| self.stats.denormalize_x(p)).collect()
    }

    pub fn raw_y(&self) -> Vec<f64> {
        self.y.iter().map(|v| self.stats.denormalize_y(*v)).collect()
    }

    pub fn raw_r(&self) -> Option<Vec<f64>> {
        let s = self.stats.variance_scale();
        self.r.as_ref().map(|r| r.iter().map(|v| v * s).collect())
    }

    /// CSV with header `x,y,elevation,variance` in meters / m². The variance
    /// column is empty when no variances are attached.
    pub fn to_csv(&self) -> String {
        let x = self.raw_x();
        let y = self.raw_y();
        let r = self.raw_r();
        let mut s = String::from("x,y,elevation,variance\n");
        for i in 0..x.len() {
            let var = r.as_ref().map(|r| format!("{}", r[i])).unwrap_or_default();
            writeln!(s, "{},{},{},{}", x[i][0], x[i][1], y[i], var).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| GpError::io(path, e))
    }
}

/// One sample per valid cell, located at the cell center.
pub fn grid_to_dataset(dem: &DemGrid, var_grid: Option<&DemGrid>) -> Result<Dataset> {
    if let Some(v) = var_grid {
        dem.ensure_same_geometry(v, "variance grid")?;
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut r = var_grid.map(|_| Vec::new());
    for row in 0..dem.nrows {
        for col in 0..dem.ncols {
            let z = dem.get(row, col);
            if dem.is_nodata(z) {
                continue;
            }
            if let (Some(vg), Some(r)) = (var_grid, r.as_mut()) {
                let v = vg.get(row, col);
                if vg.is_nodata(v) {
                    continue;
                }
                r.push(v);
            }
            x.push(dem.cell_center(row, col));
            y.push(z);
        }
    }
    if x.is_empty() {
        return Err(GpError::EmptyDataset("every grid cell is nodata".into()));
    }
    Dataset::from_raw(x, y, r)
}
