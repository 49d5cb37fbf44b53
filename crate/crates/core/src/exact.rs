//! Exact GP regression with homoscedastic or fixed per-point noise.

use std::f64::consts::PI;

use log::debug;
use nalgebra::DVector;
#[cfg(test)]
use nalgebra::DMatrix;

use crate::error::{GpError, Result};
use crate::kernels::{check_points, contract_sym_gradients, gram_sym, gram_unchecked, KernelConfig, Point2};
use crate::linalg::Cholesky;
use crate::mean::MeanFunction;
use crate::method::{MethodConfig, INIT_NOISE};
use crate::terrain::Dataset;
use crate::optim::{Adam, AdamConfig};

/// Lower bound on a learned homoscedastic noise variance (normalized units).
pub const NOISE_FLOOR: f64 = 1e-6;

const PREDICT_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    Homoscedastic { log_variance: f64 },
    /// Fixed observation variance for each training point.
    PerPoint(Vec<f64>),
}

impl Noise {
    pub fn homoscedastic(variance: f64) -> Self {
        Noise::Homoscedastic {
            log_variance: variance.ln(),
        }
    }

    pub fn variances(&self, n: usize) -> Vec<f64> {
        match self {
            Noise::Homoscedastic { log_variance } => vec![log_variance.exp(); n],
            Noise::PerPoint(v) => v.clone(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Noise::Homoscedastic { log_variance } if log_variance.is_finite() => Ok(()),
            Noise::Homoscedastic { log_variance } => Err(GpError::InvalidInput(format!(
                "noise log-variance must be finite (got {log_variance})"
            ))),
            Noise::PerPoint(v) => {
                if v.len() != n {
                    return Err(GpError::ShapeMismatch {
                        expected: format!("{n} noise variances"),
                        actual: format!("{}", v.len()),
                    });
                }
                match v.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
                    Some(i) => Err(GpError::InvalidInput(format!(
                        "noise variance at index {i} must be positive (got {})",
                        v[i]
                    ))),
                    None => Ok(()),
                }
            }
        }
    }
}

fn check_problem(x: &[Point2], y: &[f64], noise: &Noise) -> Result<()> {
    if x.is_empty() {
        return Err(GpError::EmptyDataset("exact GP needs at least one training point".into()));
    }
    if x.len() != y.len() {
        return Err(GpError::ShapeMismatch {
            expected: format!("{} targets", x.len()),
            actual: format!("{}", y.len()),
        });
    }
    check_points(x)?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(GpError::InvalidInput(format!("non-finite target at index {i}")));
    }
    noise.validate(x.len())
}

struct Factored {
    chol: Cholesky,
    resid: DVector<f64>,
    alpha: DVector<f64>,
}

fn factor(x: &[Point2], y: &[f64], mean: &MeanFunction, kernel: &KernelConfig, noise: &Noise) -> Result<Factored> {
    let mut k = gram_sym(kernel, x);
    for (i, v) in noise.variances(x.len()).into_iter().enumerate() {
        k[(i, i)] += v;
    }
    let chol = Cholesky::factor(&k)?;
    let resid = DVector::from_iterator(y.len(), x.iter().zip(y).map(|(p, v)| v - mean.eval(p)));
    let alpha = chol.solve_vec(&resid);
    Ok(Factored { chol, resid, alpha })
}

fn lml_from(f: &Factored) -> f64 {
    let n = f.resid.len() as f64;
    -0.5 * f.resid.dot(&f.alpha) - 0.5 * f.chol.log_det() - 0.5 * n * (2.0 * PI).ln()
}

/// log N(Y | m(X), K + diag(noise)).
pub fn log_marginal_likelihood(
    x: &[Point2],
    y: &[f64],
    mean: &MeanFunction,
    kernel: &KernelConfig,
    noise: &Noise,
) -> Result<f64> {
    check_problem(x, y, noise)?;
    Ok(lml_from(&factor(x, y, mean, kernel, noise)?))
}

/// LML value and its gradient with respect to every trainable quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct LmlGradients {
    pub value: f64,
    /// In [`KernelConfig::params`] order.
    pub kernel: Vec<f64>,
    /// Present when the mean is a learnable constant.
    pub mean_constant: Option<f64>,
    /// Present when the noise is homoscedastic.
    pub log_noise: Option<f64>,
}

impl LmlGradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.kernel.clone();
        v.extend(self.mean_constant);
        v.extend(self.log_noise);
        v
    }
}

/// ∂LML/∂θ = ½ tr((a aᵀ − K_y⁻¹) ∂K_y/∂θ), with a = K_y⁻¹ (Y − m(X)).
pub fn lml_gradients(
    x: &[Point2],
    y: &[f64],
    mean: &MeanFunction,
    kernel: &KernelConfig,
    noise: &Noise,
) -> Result<LmlGradients> {
    check_problem(x, y, noise)?;
    let f = factor(x, y, mean, kernel, noise)?;
    let value = lml_from(&f);
    let kinv = f.chol.inverse();
    let a = &f.alpha;
    let n = x.len();
    let mut w = kinv;
    // w ← a aᵀ − K⁻¹
    for j in 0..n {
        for i in 0..n {
            w[(i, j)] = a[i] * a[j] - w[(i, j)];
        }
    }
    let kernel_grad = contract_sym_gradients(kernel, x, &w).into_iter().map(|g| 0.5 * g).collect();
    let mean_constant = mean.is_learnable().then(|| a.sum());
    let log_noise = match noise {
        Noise::Homoscedastic { log_variance } => Some(0.5 * log_variance.exp() * w.trace()),
        Noise::PerPoint(_) => None,
    };
    Ok(LmlGradients {
        value,
        kernel: kernel_grad,
        mean_constant,
        log_noise,
    })
}

/// Fitted exact GP with its Cholesky cache.
#[derive(Debug, Clone)]
pub struct ExactGpModel {
    kernel: KernelConfig,
    mean: MeanFunction,
    noise: Noise,
    x: Vec<Point2>,
    y: Vec<f64>,
    chol: Cholesky,
    alpha: DVector<f64>,
}

/// Equal when built from the same data and hyperparameters.
impl PartialEq for ExactGpModel {
    fn eq(&self, other: &Self) -> bool {
        self.kernel == other.kernel
            && self.mean == other.mean
            && self.noise == other.noise
            && self.x == other.x
            && self.y == other.y
    }
}

impl ExactGpModel {
    pub fn new(
        x: Vec<Point2>,
        y: Vec<f64>,
        kernel: KernelConfig,
        mean: MeanFunction,
        noise: Noise,
    ) -> Result<Self> {
        check_problem(&x, &y, &noise)?;
        let f = factor(&x, &y, &mean, &kernel, &noise)?;
        Ok(ExactGpModel {
            kernel,
            mean,
            noise,
            x,
            y,
            chol: f.chol,
            alpha: f.alpha,
        })
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn noise(&self) -> &Noise {
        &self.noise
    }

    pub fn x(&self) -> &[Point2] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Diagonal jitter the cached factorization needed.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.x.len() as f64;
        let resid = DVector::from_iterator(self.y.len(), self.x.iter().zip(&self.y).map(|(p, v)| v - self.mean.eval(p)));
        -0.5 * resid.dot(&self.alpha) - 0.5 * self.chol.log_det() - 0.5 * n * (2.0 * PI).ln()
    }

    /// Posterior mean and latent (noise-free) variance at each query.
    pub fn predict(&self, xs: &[Point2]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_points(xs)?;
        let prior_var = self.kernel.value_r2(0.0);
        let mut mean = Vec::with_capacity(xs.len());
        let mut var = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(PREDICT_CHUNK) {
            let ks = gram_unchecked(&self.kernel, &self.x, chunk);
            let mu = ks.tr_mul(&self.alpha);
            let v = self.chol.solve_lower(&ks);
            for (j, p) in chunk.iter().enumerate() {
                mean.push(self.mean.eval(p) + mu[j]);
                let reduction = v.column(j).norm_squared();
                var.push((prior_var - reduction).max(0.0));
            }
        }
        Ok((mean, var))
    }
}

pub fn predict_exact(model: &ExactGpModel, xs: &[Point2]) -> Result<(Vec<f64>, Vec<f64>)> {
    model.predict(xs)
}

/// Training knobs for an exact GP.
#[derive(Debug, Clone, Copy)]
pub struct ExactFitOptions {
    pub adam: AdamConfig,
    /// Optimize the homoscedastic noise; ignored for per-point noise.
    pub learn_noise: bool,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    /// Training loss per epoch, in order.
    pub losses: Vec<f64>,
}

struct Layout {
    n_kernel: usize,
    mean: bool,
    noise: bool,
}

impl Layout {
    fn names(&self, kernel: &KernelConfig) -> Vec<String> {
        let mut v: Vec<String> = kernel.param_names().into_iter().map(String::from).collect();
        if self.mean {
            v.push("mean_constant".into());
        }
        if self.noise {
            v.push("log_noise".into());
        }
        v
    }

    fn pack(&self, kernel: &KernelConfig, mean: &MeanFunction, noise: &Noise) -> Vec<f64> {
        let mut p = kernel.params();
        if let (true, MeanFunction::Constant(c)) = (self.mean, mean) {
            p.push(*c);
        }
        if let (true, Noise::Homoscedastic { log_variance }) = (self.noise, noise) {
            p.push(*log_variance);
        }
        p
    }

    fn unpack(&self, p: &[f64], kernel: &mut KernelConfig, mean: &mut MeanFunction, noise: &mut Noise) {
        kernel.set_params(&p[..self.n_kernel]);
        let mut i = self.n_kernel;
        if self.mean {
            *mean = MeanFunction::Constant(p[i]);
            i += 1;
        }
        if self.noise {
            *noise = Noise::Homoscedastic { log_variance: p[i] };
        }
    }
}

/// Maximize the LML with full-batch Adam, starting from the given model spec.
pub fn train_exact(
    x: Vec<Point2>,
    y: Vec<f64>,
    mut kernel: KernelConfig,
    mut mean: MeanFunction,
    mut noise: Noise,
    opts: &ExactFitOptions,
) -> Result<Trained<ExactGpModel>> {
    opts.adam.validate()?;
    check_problem(&x, &y, &noise)?;
    let layout = Layout {
        n_kernel: kernel.n_params(),
        mean: mean.is_learnable(),
        noise: opts.learn_noise && matches!(noise, Noise::Homoscedastic { .. }),
    };
    let mut params = layout.pack(&kernel, &mean, &noise);
    let mut adam = Adam::new(opts.adam, layout.names(&kernel));
    let n = x.len() as f64;
    let floor = NOISE_FLOOR.ln();
    let mut losses = Vec::with_capacity(opts.adam.max_epochs);
    for epoch in 0..opts.adam.max_epochs {
        layout.unpack(&params, &mut kernel, &mut mean, &mut noise);
        let g = lml_gradients(&x, &y, &mean, &kernel, &noise)?;
        let loss = -g.value / n;
        if !loss.is_finite() {
            return Err(GpError::Divergence {
                parameter: "loss".into(),
            });
        }
        debug!("exact epoch {epoch}: loss {loss:.6}");
        losses.push(loss);
        let mut flat = g.kernel.clone();
        if layout.mean {
            flat.push(g.mean_constant.unwrap_or(0.0));
        }
        if layout.noise {
            flat.push(g.log_noise.unwrap_or(0.0));
        }
        let grad: Vec<f64> = flat.iter().map(|v| -v / n).collect();
        adam.step(&mut params, &grad)?;
        if layout.noise {
            let last = params.len() - 1;
            params[last] = params[last].max(floor);
        }
    }
    layout.unpack(&params, &mut kernel, &mut mean, &mut noise);
    let model = ExactGpModel::new(x, y, kernel, mean, noise)?;
    Ok(Trained { model, losses })
}

/// Fit an exact GP with a method's kernel and Adam schedule.
///
/// With `noise = None` a homoscedastic noise is learned; otherwise the given
/// per-point variances are held fixed.
pub fn fit_exact(
    data: &Dataset,
    method: &MethodConfig,
    mean: MeanFunction,
    noise: Option<Vec<f64>>,
) -> Result<Trained<ExactGpModel>> {
    method.validate()?;
    let learn_noise = noise.is_none();
    let noise = match noise {
        Some(v) => Noise::PerPoint(v),
        None => Noise::homoscedastic(INIT_NOISE),
    };
    let opts = ExactFitOptions {
        adam: method.adam,
        learn_noise,
    };
    train_exact(data.x.clone(), data.y.clone(), method.initial_kernel(), mean, noise, &opts)
}

/// Dense explicit-inverse reference used by tests in this module.
#[cfg(test)]
pub(crate) fn dense_reference(
    x: &[Point2],
    y: &[f64],
    mean: &MeanFunction,
    kernel: &KernelConfig,
    noise: &[f64],
    xs: &[Point2],
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&x[i], &x[j]) + if i == j { noise[i] } else { 0.0 });
    let kinv = k.clone().try_inverse().unwrap();
    let r = DVector::from_fn(n, |i, _| y[i] - mean.eval(&x[i]));
    let lml = -0.5 * (r.transpose() * &kinv * &r)[(0, 0)] - 0.5 * k.determinant().ln() - 0.5 * n as f64 * (2.0 * PI).ln();
    let mut mu = Vec::new();
    let mut var = Vec::new();
    for p in xs {
        let ks = DVector::from_fn(n, |i, _| kernel.eval(&x[i], p));
        mu.push(mean.eval(p) + (ks.transpose() * &kinv * &r)[(0, 0)]);
        var.push(kernel.eval(p, p) - (ks.transpose() * &kinv * &ks)[(0, 0)]);
    }
    (mu, var, lml)
}
