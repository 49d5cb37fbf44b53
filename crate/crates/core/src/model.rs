//! A fitted model of any of the five methods, queried in world coordinates.

use crate::error::Result;
use crate::exact::{ExactGpModel, Noise};
use crate::kernels::Point2;
use crate::method::MethodId;
use crate::svgp::{predictive_qf, SvgpLikelihood, SvgpState};
use crate::terrain::NormStats;
use crate::two_stage::{predict_terrain, TwoStageModel};

/// Predictions in meters (mean) and m² (variances).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    /// Variance of the latent surface f.
    pub latent_var: Vec<f64>,
    /// Latent variance plus observation noise at the query.
    pub predictive_var: Vec<f64>,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum ModelBody {
    Exact(ExactGpModel),
    Sparse(SvgpState),
    TwoStage(TwoStageModel),
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub method: MethodId,
    pub stats: NormStats,
    pub body: ModelBody,
}

fn homoscedastic(
    stats: &NormStats,
    xs: &[Point2],
    f: impl FnOnce(&[Point2]) -> Result<(Vec<f64>, Vec<f64>)>,
    noise: f64,
) -> Result<Prediction> {
    let xn: Vec<Point2> = xs.iter().map(|p| stats.normalize_x(p)).collect();
    let (mu, var) = f(&xn)?;
    let scale = stats.variance_scale();
    Ok(Prediction {
        mean: mu.iter().map(|v| stats.denormalize_y(*v)).collect(),
        latent_var: var.iter().map(|v| v * scale).collect(),
        predictive_var: var.iter().map(|v| (v + noise) * scale).collect(),
    })
}

impl FittedModel {
    pub fn predict(&self, xs: &[Point2]) -> Result<Prediction> {
        match &self.body {
            ModelBody::Exact(m) => {
                let noise = match m.noise() {
                    Noise::Homoscedastic { log_variance } => log_variance.exp(),
                    Noise::PerPoint(_) => 0.0,
                };
                homoscedastic(&self.stats, xs, |x| m.predict(x), noise)
            }
            ModelBody::Sparse(s) => {
                let noise = match s.likelihood {
                    SvgpLikelihood::Gaussian { log_variance } => log_variance.exp(),
                    SvgpLikelihood::Heteroscedastic => 0.0,
                };
                homoscedastic(&self.stats, xs, |x| predictive_qf(s, x), noise)
            }
            ModelBody::TwoStage(t) => predict_terrain(t, xs),
        }
    }

    /// Learned homoscedastic noise variance in m², if the method has one.
    pub fn noise_variance(&self) -> Option<f64> {
        let v = match &self.body {
            ModelBody::Exact(m) => match m.noise() {
                Noise::Homoscedastic { log_variance } => log_variance.exp(),
                Noise::PerPoint(_) => return None,
            },
            ModelBody::Sparse(s) => match s.likelihood {
                SvgpLikelihood::Gaussian { log_variance } => log_variance.exp(),
                SvgpLikelihood::Heteroscedastic => return None,
            },
            ModelBody::TwoStage(_) => return None,
        };
        Some(v * self.stats.variance_scale())
    }
}
