use super::dem::DemGrid;
use crate::error::{GpError, Result};
use crate::kernels::Point2;

/// Bilinear interpolant over the cell centers of a low-resolution grid,
/// held constant beyond the outermost centers. Works in world meters.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearPrior {
    grid: DemGrid,
}

impl BilinearPrior {
    pub fn grid(&self) -> &DemGrid {
        &self.grid
    }

    pub fn eval(&self, p: &Point2) -> f64 {
        let g = &self.grid;
        let cs = g.cellsize;
        let top = g.cell_center(0, 0);
        let u = ((p[0] - top[0]) / cs).clamp(0.0, (g.ncols - 1) as f64);
        let v = ((top[1] - p[1]) / cs).clamp(0.0, (g.nrows - 1) as f64);
        let c0 = (u.floor() as usize).min(g.ncols - 1);
        let r0 = (v.floor() as usize).min(g.nrows - 1);
        let c1 = (c0 + 1).min(g.ncols - 1);
        let r1 = (r0 + 1).min(g.nrows - 1);
        let fu = u - c0 as f64;
        let fv = v - r0 as f64;
        if fu == 0.0 && fv == 0.0 {
            return g.get(r0, c0);
        }
        let top_row = g.get(r0, c0) * (1.0 - fu) + g.get(r0, c1) * fu;
        let bottom_row = g.get(r1, c0) * (1.0 - fu) + g.get(r1, c1) * fu;
        top_row * (1.0 - fv) + bottom_row * fv
    }
}

pub fn bilinear_prior(prior: &DemGrid) -> Result<BilinearPrior> {
    if prior.ncols < 2 || prior.nrows < 2 {
        return Err(GpError::InvalidInput(format!(
            "prior grid must be at least 2x2 (got {}x{})",
            prior.ncols, prior.nrows
        )));
    }
    if prior.valid_values().count() != prior.len() {
        return Err(GpError::InvalidInput("prior grid contains nodata cells".into()));
    }
    Ok(BilinearPrior { grid: prior.clone() })
}
