//! Two-stage heteroscedastic regression: a GP on log noise variances is fitted
//! and frozen, then its posterior mean sets the per-point noise of the terrain GP.

use log::info;

use crate::error::{GpError, Result};
use crate::exact::{fit_exact, train_exact, ExactFitOptions, ExactGpModel, Noise, Trained};
use crate::kernels::{KernelConfig, KernelFamily, Point2};
use crate::mean::MeanFunction;
use crate::method::{MethodConfig, INIT_LENGTHSCALE, INIT_NOISE, INIT_OUTPUTSCALE};
use crate::model::Prediction;
use crate::optim::{AdamConfig, BatchSize};
use crate::svgp::{fit_svgp, init_inducing, predictive_qf, train_svgp, SvgpFitOptions, SvgpLikelihood, SvgpState};
use crate::terrain::{bilinear_prior, Dataset, DemGrid, NormStats};

/// μ_g is clamped to ±this before exponentiation.
pub const LOG_VAR_CLAMP: f64 = 20.0;

/// Largest dataset for which stage 1 uses the exact GP.
pub const STAGE1_EXACT_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseGpConfig {
    pub adam: AdamConfig,
    pub exact_limit: usize,
    /// Inducing count and batch size when stage 1 falls back to an SVGP.
    pub num_inducing: usize,
    pub batch_size: usize,
}

impl Default for NoiseGpConfig {
    fn default() -> Self {
        NoiseGpConfig {
            adam: AdamConfig::new(0.1, 50, BatchSize::Full),
            exact_limit: STAGE1_EXACT_LIMIT,
            num_inducing: 1024,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseGp {
    Exact(ExactGpModel),
    Sparse(SvgpState),
}

/// Frozen GP over log r. Exposes queries only.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    gp: NoiseGp,
}

impl NoiseModel {
    pub(crate) fn from_gp(gp: NoiseGp) -> Self {
        NoiseModel { gp }
    }

    pub fn gp(&self) -> &NoiseGp {
        &self.gp
    }

    /// Learned observation noise σ_ζ² of the noise GP itself.
    pub fn sigma_zeta2(&self) -> f64 {
        match &self.gp {
            NoiseGp::Exact(m) => match m.noise() {
                Noise::Homoscedastic { log_variance } => log_variance.exp(),
                Noise::PerPoint(_) => unreachable!("noise GP is homoscedastic"),
            },
            NoiseGp::Sparse(s) => match s.likelihood {
                SvgpLikelihood::Gaussian { log_variance } => log_variance.exp(),
                SvgpLikelihood::Heteroscedastic => unreachable!("noise GP is homoscedastic"),
            },
        }
    }

    /// Posterior mean μ_g, clamped to [−20, 20], at normalized inputs.
    pub fn log_variance(&self, xs: &[Point2]) -> Result<Vec<f64>> {
        let (mu, _) = match &self.gp {
            NoiseGp::Exact(m) => m.predict(xs)?,
            NoiseGp::Sparse(s) => predictive_qf(s, xs)?,
        };
        Ok(mu.into_iter().map(|v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP)).collect())
    }

    /// exp(μ_g) at normalized inputs, in normalized variance units.
    pub fn variance(&self, xs: &[Point2]) -> Result<Vec<f64>> {
        Ok(self.log_variance(xs)?.into_iter().map(f64::exp).collect())
    }
}

/// Fit the noise GP to log r_i (RBF kernel, constant mean started at mean(log r)).
pub fn fit_noise_gp(x: &[Point2], r: &[f64], config: &NoiseGpConfig, seed: u64) -> Result<Trained<NoiseModel>> {
    if x.len() != r.len() {
        return Err(GpError::ShapeMismatch {
            expected: format!("{} variances", x.len()),
            actual: format!("{}", r.len()),
        });
    }
    if let Some(i) = r.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(GpError::InvalidInput(format!(
            "noise variance at index {i} must be positive (got {})",
            r[i]
        )));
    }
    let targets: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let mean = MeanFunction::Constant(targets.iter().sum::<f64>() / targets.len().max(1) as f64);
    let kernel = KernelConfig::new(KernelFamily::Rbf, INIT_LENGTHSCALE, INIT_OUTPUTSCALE)?;
    if x.len() <= config.exact_limit {
        let opts = ExactFitOptions {
            adam: config.adam,
            learn_noise: true,
        };
        let t = train_exact(x.to_vec(), targets, kernel, mean, Noise::homoscedastic(INIT_NOISE), &opts)?;
        info!("noise GP (exact): sigma_zeta^2 = {:.4e}", t.model.noise().variances(1)[0]);
        return Ok(Trained {
            model: NoiseModel::from_gp(NoiseGp::Exact(t.model)),
            losses: t.losses,
        });
    }
    let z = init_inducing(x, config.num_inducing.min(x.len()), seed)?;
    let state = SvgpState::new_whitened(
        z,
        kernel,
        mean,
        SvgpLikelihood::Gaussian {
            log_variance: INIT_NOISE.ln(),
        },
    )?;
    let mut adam = config.adam;
    adam.batch_size = BatchSize::Fixed(config.batch_size);
    let t = train_svgp(state, x, &targets, None, &SvgpFitOptions::new(adam), seed)?;
    Ok(Trained {
        model: NoiseModel::from_gp(NoiseGp::Sparse(t.model)),
        losses: t.losses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerrainGp {
    Exact(ExactGpModel),
    Variational(SvgpState),
}

#[derive(Debug, Clone)]
pub struct TwoStageModel {
    pub noise: NoiseModel,
    pub terrain: TerrainGp,
    pub stats: NormStats,
}

/// Mean function for the terrain GP: the low-resolution prior when given,
/// otherwise a learned constant.
pub fn terrain_mean(prior: Option<&DemGrid>, stats: NormStats) -> Result<MeanFunction> {
    Ok(match prior {
        Some(g) => MeanFunction::grid(bilinear_prior(g)?, stats),
        None => MeanFunction::Constant(0.0),
    })
}

/// Stage 2: per-point noise exp(μ_g(x_i)) is computed once from the frozen
/// noise model, then the terrain GP is fitted with it held fixed.
pub fn fit_terrain(
    data: &Dataset,
    noise: &NoiseModel,
    method: &MethodConfig,
    prior: Option<&DemGrid>,
) -> Result<Trained<TwoStageModel>> {
    let v = noise.variance(&data.x)?;
    let mean = terrain_mean(prior, data.stats)?;
    let (terrain, losses) = if method.id.is_variational() {
        let t = fit_svgp(data, method, mean, Some(&v))?;
        (TerrainGp::Variational(t.model), t.losses)
    } else {
        let t = fit_exact(data, method, mean, Some(v))?;
        (TerrainGp::Exact(t.model), t.losses)
    };
    Ok(Trained {
        model: TwoStageModel {
            noise: noise.clone(),
            terrain,
            stats: data.stats,
        },
        losses,
    })
}

/// Mean, latent variance, and noise-inclusive variance in meters and m² at
/// world-coordinate queries.
pub fn predict_terrain(model: &TwoStageModel, xs: &[Point2]) -> Result<Prediction> {
    let stats = &model.stats;
    let xn: Vec<Point2> = xs.iter().map(|p| stats.normalize_x(p)).collect();
    let (mu, latent) = match &model.terrain {
        TerrainGp::Exact(m) => m.predict(&xn)?,
        TerrainGp::Variational(s) => predictive_qf(s, &xn)?,
    };
    let noise = model.noise.variance(&xn)?;
    let scale = stats.variance_scale();
    Ok(Prediction {
        mean: mu.iter().map(|v| stats.denormalize_y(*v)).collect(),
        latent_var: latent.iter().map(|v| v * scale).collect(),
        predictive_var: latent.iter().zip(&noise).map(|(l, n)| (l + n) * scale).collect(),
    })
}

impl TwoStageModel {
    pub fn predict(&self, xs: &[Point2]) -> Result<Prediction> {
        predict_terrain(self, xs)
    }

    /// The per-point noise the terrain GP was trained with.
    pub fn training_noise(&self) -> Option<&[f64]> {
        match &self.terrain {
            TerrainGp::Exact(m) => match m.noise() {
                Noise::PerPoint(v) => Some(v),
                Noise::Homoscedastic { .. } => None,
            },
            TerrainGp::Variational(_) => None,
        }
    }
}
