//! End-to-end synthetic evaluation scene: full-resolution truth, a noisy
//! factor-2 training grid with its variance map, and a factor-5 prior.

use super::dem::DemGrid;
use super::protocol::{downsample, inject_noise};
use super::synth::{hillshade, shadow_uncertainty, synth_terrain, SynthParams};
use crate::error::Result;

pub const TRAIN_FACTOR: usize = 2;
pub const PRIOR_FACTOR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// Variance from hillshade darkness.
    Shadow,
    /// Western half at `var_lit`, eastern half at `var_dark`.
    Split,
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// Full-resolution noise-free terrain.
    pub truth: DemGrid,
    /// Factor-2 decimation of the truth before noise injection.
    pub clean_train: DemGrid,
    /// Factor-2 decimation with injected noise.
    pub train: DemGrid,
    /// Per-cell noise variance on the training grid, m².
    pub uncertainty: DemGrid,
    /// Factor-5 decimation of the truth.
    pub prior: DemGrid,
}

fn split_variance(truth: &DemGrid, var_lit: f64, var_dark: f64) -> Result<DemGrid> {
    let half = truth.ncols / 2;
    let vals = (0..truth.len())
        .map(|i| if i % truth.ncols < half { var_lit } else { var_dark })
        .collect();
    truth.with_values(vals)
}

pub fn build_scene(params: &SynthParams, mode: NoiseMode) -> Result<Scene> {
    let truth = synth_terrain(params)?;
    let full_var = match mode {
        NoiseMode::Shadow => {
            let shade = hillshade(&truth, params.sun_azimuth_deg, params.sun_elevation_deg)?;
            shadow_uncertainty(&shade, params.var_dark, params.var_lit)?
        }
        NoiseMode::Split => split_variance(&truth, params.var_lit, params.var_dark)?,
    };
    let clean_train = downsample(&truth, TRAIN_FACTOR)?;
    let uncertainty = downsample(&full_var, TRAIN_FACTOR)?;
    let train = inject_noise(&clean_train, &uncertainty, params.seed)?;
    let prior = downsample(&truth, PRIOR_FACTOR)?;
    Ok(Scene {
        truth,
        clean_train,
        train,
        uncertainty,
        prior,
    })
}

/// The split-noise benchmark scene: 64x64 truth, quiet west, 10x noisier east.
pub fn split_noise_params(seed: u64) -> SynthParams {
    SynthParams {
        size: 64,
        var_lit: 0.02,
        var_dark: 0.2,
        seed,
        ..SynthParams::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_geometry() {
        let s = build_scene(&SynthParams::default(), NoiseMode::Shadow).unwrap();
        assert_eq!((s.train.ncols, s.train.nrows), (32, 32));
        assert_eq!((s.prior.ncols, s.prior.nrows), (13, 13));
        assert!(s.train.same_geometry(&s.uncertainty));
        assert_eq!(s.train.cell_center(3, 4), s.truth.cell_center(6, 8));
    }

    #[test]
    fn split_mode_variance_halves() {
        let p = split_noise_params(1);
        let s = build_scene(&p, NoiseMode::Split).unwrap();
        assert_eq!(s.uncertainty.get(0, 0), p.var_lit);
        assert_eq!(s.uncertainty.get(0, 31), p.var_dark);
    }

    #[test]
    fn flat_truth_gives_pure_noise_training_grid() {
        let p = SynthParams {
            craters: 0,
            amplitude: 0.0,
            ..SynthParams::default()
        };
        let s = build_scene(&p, NoiseMode::Shadow).unwrap();
        assert!(s.truth.values.iter().all(|v| *v == 0.0));
        assert!(s.train.values.iter().any(|v| *v != 0.0));
    }
}
