//! Resolution reduction and sensor-noise injection.

use rand_distr::{Distribution, StandardNormal};

use super::dem::DemGrid;
use crate::error::{GpError, Result};
use crate::rng::{stream, STREAM_NOISE_INJECT};

/// Stride decimation keeping cells (i·factor, j·factor), anchored at the
/// top-left cell. Cell centers of kept cells do not move.
pub fn downsample(dem: &DemGrid, factor: usize) -> Result<DemGrid> {
    if factor == 0 {
        return Err(GpError::InvalidConfig("downsample factor must be >= 1".into()));
    }
    if factor > dem.ncols || factor > dem.nrows {
        return Err(GpError::InvalidConfig(format!(
            "downsample factor {factor} exceeds grid dimensions {}x{}",
            dem.ncols, dem.nrows
        )));
    }
    if factor == 1 {
        return Ok(dem.clone());
    }
    let ncols = dem.ncols.div_ceil(factor);
    let nrows = dem.nrows.div_ceil(factor);
    let cs = dem.cellsize * factor as f64;
    let top_left = dem.cell_center(0, 0);
    let xll = top_left[0] - 0.5 * cs;
    let yll = top_left[1] + 0.5 * cs - nrows as f64 * cs;
    let mut values = Vec::with_capacity(ncols * nrows);
    for r in 0..nrows {
        for c in 0..ncols {
            values.push(dem.get(r * factor, c * factor));
        }
    }
    DemGrid::new(ncols, nrows, xll, yll, cs, dem.nodata, values)
}

/// Perturb every cell by an independent N(0, var) draw. Zero-variance and
/// nodata cells are left untouched.
pub fn inject_noise(dem: &DemGrid, var_grid: &DemGrid, seed: u64) -> Result<DemGrid> {
    if dem.ncols != var_grid.ncols || dem.nrows != var_grid.nrows {
        return Err(GpError::ShapeMismatch {
            expected: format!("{}x{}", dem.ncols, dem.nrows),
            actual: format!("{}x{}", var_grid.ncols, var_grid.nrows),
        });
    }
    let mut rng = stream(seed, STREAM_NOISE_INJECT);
    let mut out = dem.values.clone();
    for (i, (v, var)) in out.iter_mut().zip(&var_grid.values).enumerate() {
        // one draw per cell regardless of content keeps streams aligned across grids
        let z: f64 = StandardNormal.sample(&mut rng);
        if var_grid.is_nodata(*var) || dem.is_nodata(*v) {
            continue;
        }
        if *var < 0.0 {
            return Err(GpError::InvalidInput(format!("negative variance {var} at cell {i}")));
        }
        if *var > 0.0 {
            *v += var.sqrt() * z;
        }
    }
    dem.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::dem::DEFAULT_NODATA;

    fn ramp(n: usize) -> DemGrid {
        DemGrid::new(n, n, 50.0, 20.0, 2.0, DEFAULT_NODATA, (0..n * n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn factor_one_is_identity() {
        let g = ramp(4);
        assert_eq!(downsample(&g, 1).unwrap(), g);
    }

    #[test]
    fn factor_two_keeps_even_cells_and_centers() {
        let g = ramp(4);
        let d = downsample(&g, 2).unwrap();
        assert_eq!((d.ncols, d.nrows), (2, 2));
        assert_eq!(d.values, vec![g.get(0, 0), g.get(0, 2), g.get(2, 0), g.get(2, 2)]);
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(d.cell_center(r, c), g.cell_center(2 * r, 2 * c));
            }
        }
        assert_eq!(d.cellsize, 4.0);
    }

    #[test]
    fn ragged_factor_keeps_partial_blocks() {
        let g = ramp(7);
        let d = downsample(&g, 5).unwrap();
        assert_eq!((d.ncols, d.nrows), (2, 2));
        assert_eq!(d.cell_center(1, 1), g.cell_center(5, 5));
    }

    #[test]
    fn oversized_factor_rejected() {
        assert!(matches!(downsample(&ramp(3), 4), Err(GpError::InvalidConfig(_))));
        assert!(downsample(&ramp(3), 0).is_err());
    }

    #[test]
    fn zero_variance_is_bitwise_identity() {
        let g = ramp(5);
        let zeros = g.with_values(vec![0.0; 25]).unwrap();
        assert_eq!(inject_noise(&g, &zeros, 3).unwrap(), g);
    }

    #[test]
    fn uniform_variance_statistics_and_determinism() {
        let n = 100;
        let g = DemGrid::filled(n, n, 1.0, 5.0).unwrap();
        let var = g.with_values(vec![0.3; n * n]).unwrap();
        let a = inject_noise(&g, &var, 1).unwrap();
        assert_eq!(a, inject_noise(&g, &var, 1).unwrap());
        let d: Vec<f64> = a.values.iter().map(|v| v - 5.0).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sv = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((sv - 0.3).abs() < 0.05 * 0.3, "sample variance {sv}");
    }

    #[test]
    fn shape_mismatch_and_negative_variance() {
        let g = ramp(3);
        assert!(matches!(inject_noise(&g, &ramp(4), 0), Err(GpError::ShapeMismatch { .. })));
        let mut neg = g.with_values(vec![0.0; 9]).unwrap();
        neg.values[4] = -1.0;
        assert!(matches!(inject_noise(&g, &neg, 0), Err(GpError::InvalidInput(_))));
    }
}
