use crate::kernels::Point2;
use crate::terrain::{BilinearPrior, NormStats};

/// Prior mean m(x), evaluated on normalized inputs and returning normalized
/// target values.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFunction {
    Zero,
    /// Learnable constant.
    Constant(f64),
    /// Fixed low-resolution surface, interpolated in world coordinates.
    Prior(GridMean),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMean {
    pub prior: BilinearPrior,
    pub stats: NormStats,
}

impl MeanFunction {
    pub fn grid(prior: BilinearPrior, stats: NormStats) -> Self {
        MeanFunction::Prior(GridMean { prior, stats })
    }

    #[inline]
    pub fn eval(&self, x: &Point2) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => *c,
            MeanFunction::Prior(g) => g.stats.normalize_y(g.prior.eval(&g.stats.denormalize_x(x))),
        }
    }

    pub fn eval_all(&self, xs: &[Point2]) -> Vec<f64> {
        xs.iter().map(|x| self.eval(x)).collect()
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, MeanFunction::Constant(_))
    }
}
