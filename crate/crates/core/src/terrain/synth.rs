//! Procedural lunar-like terrain: a spectral fractal base with parabolic
//! crater bowls, plus Lambertian hillshading and the shadow-derived
//! uncertainty map.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::dem::{DemGrid, DEFAULT_NODATA};
use crate::error::{GpError, Result};
use crate::rng::{stream, STREAM_SYNTH};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Grid is `size x size` cells.
    pub size: usize,
    pub cellsize: f64,
    /// Spectral exponent β of the fractal base: power ∝ f^−β.
    pub roughness: f64,
    /// Standard deviation of the fractal base, meters.
    pub amplitude: f64,
    pub craters: usize,
    /// Crater radius range in cells.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Bowl depth as a fraction of crater diameter.
    pub depth_ratio: f64,
    /// Rim height as a fraction of bowl depth.
    pub rim_fraction: f64,
    pub sun_azimuth_deg: f64,
    pub sun_elevation_deg: f64,
    /// Variance in fully shadowed cells, m².
    pub var_dark: f64,
    /// Variance in fully lit cells, m².
    pub var_lit: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            size: 64,
            cellsize: 1.0,
            roughness: 3.5,
            amplitude: 2.0,
            craters: 6,
            radius_min: 3.0,
            radius_max: 10.0,
            depth_ratio: 0.2,
            rim_fraction: 0.25,
            sun_azimuth_deg: 135.0,
            sun_elevation_deg: 20.0,
            var_dark: 0.25,
            var_lit: 0.01,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GpError::InvalidConfig(m));
        if self.size < 2 {
            return bad(format!("size must be at least 2 (got {})", self.size));
        }
        if !(self.cellsize.is_finite() && self.cellsize > 0.0) {
            return bad(format!("cellsize must be positive (got {})", self.cellsize));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0 && self.roughness.is_finite()) {
            return bad("amplitude must be non-negative and roughness finite".into());
        }
        if self.craters > 0
            && !(self.radius_min > 0.0
                && self.radius_min <= self.radius_max
                && self.radius_max <= self.size as f64 / 2.0)
        {
            return bad(format!(
                "crater radius range [{}, {}] must lie within (0, {}]",
                self.radius_min,
                self.radius_max,
                self.size as f64 / 2.0
            ));
        }
        if !(self.depth_ratio >= 0.0 && self.rim_fraction >= 0.0) {
            return bad("crater depth ratio and rim fraction must be non-negative".into());
        }
        if !(self.sun_elevation_deg > 0.0 && self.sun_elevation_deg <= 90.0) {
            return bad(format!("sun elevation must be in (0, 90] (got {})", self.sun_elevation_deg));
        }
        if !(self.var_lit >= 0.0 && self.var_dark >= self.var_lit) {
            return bad(format!(
                "shadow variances need 0 <= var_lit <= var_dark (got {} / {})",
                self.var_lit, self.var_dark
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crater {
    /// Center in fractional cell coordinates (column, row).
    pub col: f64,
    pub row: f64,
    /// Radius in cells.
    pub radius: f64,
    /// Bowl depth in meters.
    pub depth: f64,
    /// Rim crest height in meters.
    pub rim_height: f64,
}

/// Height contribution of a crater at distance `r` cells from its center.
/// Parabolic bowl inside the radius plus a cosine-squared rim of half-width R/2.
pub fn crater_profile(c: &Crater, r: f64) -> f64 {
    let bowl = if r < c.radius {
        let t = r / c.radius;
        -c.depth * (1.0 - t * t)
    } else {
        0.0
    };
    let half_width = 0.5 * c.radius;
    let d = (r - c.radius).abs();
    let rim = if d < half_width {
        let s = (std::f64::consts::FRAC_PI_2 * d / half_width).cos();
        c.rim_height * s * s
    } else {
        0.0
    };
    bowl + rim
}

/// Add a crater to the grid in place.
pub fn place_crater(dem: &mut DemGrid, c: &Crater) {
    let reach = 1.5 * c.radius + 1.0;
    let r0 = ((c.row - reach).floor().max(0.0)) as usize;
    let r1 = ((c.row + reach).ceil() as usize).min(dem.nrows - 1);
    let c0 = ((c.col - reach).floor().max(0.0)) as usize;
    let c1 = ((c.col + reach).ceil() as usize).min(dem.ncols - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let dr = row as f64 - c.row;
            let dc = col as f64 - c.col;
            let h = crater_profile(c, (dr * dr + dc * dc).sqrt());
            if h != 0.0 {
                let i = dem.index(row, col);
                dem.values[i] += h;
            }
        }
    }
}

/// Fractal surface with power spectrum ∝ |f|^−β, rescaled to the requested
/// standard deviation.
fn fractal_base<R: Rng>(size: usize, beta: f64, amplitude: f64, rng: &mut R) -> Vec<f64> {
    let n = size;
    let mut buf: Vec<Complex<f64>> = (0..n * n)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    if amplitude == 0.0 {
        return vec![0.0; n * n];
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    fft2(&mut buf, n, fwd.as_ref());
    let freq = |k: usize| -> f64 {
        let k = k as f64;
        let nf = n as f64;
        if k <= nf / 2.0 {
            k / nf
        } else {
            (k - nf) / nf
        }
    };
    for r in 0..n {
        for c in 0..n {
            let f = (freq(r).powi(2) + freq(c).powi(2)).sqrt();
            let gain = if f == 0.0 { 0.0 } else { f.powf(-beta / 2.0) };
            buf[r * n + c] *= gain;
        }
    }
    fft2(&mut buf, n, inv.as_ref());
    let mut out: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
    let scale = if std > 0.0 { amplitude / std } else { 0.0 };
    for v in out.iter_mut() {
        *v = (*v - mean) * scale;
    }
    out
}

fn fft2(buf: &mut [Complex<f64>], n: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
}

/// Deterministic synthetic DEM for the given parameters.
pub fn synth_terrain(params: &SynthParams) -> Result<DemGrid> {
    params.validate()?;
    let mut rng = stream(params.seed, STREAM_SYNTH);
    let n = params.size;
    let base = fractal_base(n, params.roughness, params.amplitude, &mut rng);
    let mut dem = DemGrid::new(n, n, 0.0, 0.0, params.cellsize, DEFAULT_NODATA, base)?;
    for _ in 0..params.craters {
        let radius = if params.radius_max > params.radius_min {
            rng.gen_range(params.radius_min..params.radius_max)
        } else {
            params.radius_min
        };
        let col = rng.gen_range(0.0..n as f64);
        let row = rng.gen_range(0.0..n as f64);
        let depth = params.depth_ratio * 2.0 * radius * params.cellsize;
        place_crater(
            &mut dem,
            &Crater {
                col,
                row,
                radius,
                depth,
                rim_height: params.rim_fraction * depth,
            },
        );
    }
    Ok(dem)
}

/// Lambertian shading in [0, 1]: cosine between the central-difference
/// surface normal and the sun direction, clamped at zero.
///
/// Azimuth is measured clockwise from north; nodata cells stay nodata.
pub fn hillshade(dem: &DemGrid, azimuth_deg: f64, elevation_deg: f64) -> Result<DemGrid> {
    if dem.ncols < 2 || dem.nrows < 2 {
        return Err(GpError::InvalidInput("hillshade needs at least 2x2 cells".into()));
    }
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    let sun = [az.sin() * el.cos(), az.cos() * el.cos(), el.sin()];
    let cs = dem.cellsize;
    let z = |r: usize, c: usize, fallback: f64| {
        let v = dem.get(r, c);
        if dem.is_nodata(v) {
            fallback
        } else {
            v
        }
    };
    let mut out = Vec::with_capacity(dem.len());
    for r in 0..dem.nrows {
        for c in 0..dem.ncols {
            let v = dem.get(r, c);
            if dem.is_nodata(v) {
                out.push(dem.nodata);
                continue;
            }
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(dem.ncols - 1));
            let (rn, rs) = (r.saturating_sub(1), (r + 1).min(dem.nrows - 1));
            let dzdx = (z(r, cr, v) - z(r, cl, v)) / ((cr - cl) as f64 * cs);
            // rows run north to south, so northward is decreasing row
            let dzdy = (z(rn, c, v) - z(rs, c, v)) / ((rs - rn) as f64 * cs);
            let norm = (dzdx * dzdx + dzdy * dzdy + 1.0).sqrt();
            let dot = (-dzdx * sun[0] - dzdy * sun[1] + sun[2]) / norm;
            out.push(dot.clamp(0.0, 1.0));
        }
    }
    dem.with_values(out)
}

/// Map shading to variance: σ²_lit + (σ²_dark − σ²_lit)(1 − shade).
pub fn shadow_uncertainty(shade: &DemGrid, var_dark: f64, var_lit: f64) -> Result<DemGrid> {
    if !(var_lit >= 0.0 && var_dark >= var_lit) {
        return Err(GpError::InvalidConfig(format!(
            "need 0 <= var_lit <= var_dark (got {var_lit} / {var_dark})"
        )));
    }
    let vals = shade
        .values
        .iter()
        .map(|&s| {
            if shade.is_nodata(s) {
                shade.nodata
            } else {
                let s = s.clamp(0.0, 1.0);
                var_lit + (var_dark - var_lit) * (1.0 - s)
            }
        })
        .collect();
    shade.with_values(vals)
}
