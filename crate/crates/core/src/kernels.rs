//! Stationary covariance functions with a scale wrapper.
//!
//! Every kernel here is `σ_s² · k_base(r)` for a distance `r = ‖x − x'‖`.
//! Positive hyperparameters are stored as logarithms, and all gradients are
//! taken with respect to those logarithms.

use nalgebra::DMatrix;

use crate::error::{GpError, Result};

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }

    pub fn from_value(v: f64) -> Result<Self> {
        [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves]
            .into_iter()
            .find(|nu| nu.value() == v)
            .ok_or_else(|| GpError::InvalidConfig(format!(
                "Matérn ν must be one of 0.5, 1.5, 2.5 (got {v})"
            )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Rbf,
    RationalQuadratic,
    AbsoluteExponential,
    Matern(MaternNu),
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::RationalQuadratic => "rq",
            KernelFamily::AbsoluteExponential => "absexp",
            KernelFamily::Matern(MaternNu::Half) => "matern12",
            KernelFamily::Matern(MaternNu::ThreeHalves) => "matern32",
            KernelFamily::Matern(MaternNu::FiveHalves) => "matern52",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "rbf" => KernelFamily::Rbf,
            "rq" => KernelFamily::RationalQuadratic,
            "absexp" => KernelFamily::AbsoluteExponential,
            "matern12" => KernelFamily::Matern(MaternNu::Half),
            "matern32" => KernelFamily::Matern(MaternNu::ThreeHalves),
            "matern52" | "matern" => KernelFamily::Matern(MaternNu::FiveHalves),
            other => {
                return Err(GpError::InvalidConfig(format!("unknown kernel family `{other}`")))
            }
        })
    }
}

/// Kernel family plus log-space hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub log_lengthscale: f64,
    pub log_outputscale: f64,
    /// Only read by the rational quadratic family.
    pub log_alpha: f64,
}

impl KernelConfig {
    pub fn new(family: KernelFamily, lengthscale: f64, outputscale: f64) -> Result<Self> {
        Self::with_alpha(family, lengthscale, outputscale, 1.0)
    }

    pub fn with_alpha(
        family: KernelFamily,
        lengthscale: f64,
        outputscale: f64,
        alpha: f64,
    ) -> Result<Self> {
        for (name, v) in [("lengthscale", lengthscale), ("outputscale", outputscale), ("alpha", alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GpError::InvalidConfig(format!("{name} must be positive and finite (got {v})")));
            }
        }
        Ok(KernelConfig {
            family,
            log_lengthscale: lengthscale.ln(),
            log_outputscale: outputscale.ln(),
            log_alpha: alpha.ln(),
        })
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn outputscale(&self) -> f64 {
        self.log_outputscale.exp()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Number of trainable hyperparameters: log l, log σ_s², and log α for RQ.
    pub fn n_params(&self) -> usize {
        match self.family {
            KernelFamily::RationalQuadratic => 3,
            _ => 2,
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let mut names = vec!["log_lengthscale", "log_outputscale"];
        if self.family == KernelFamily::RationalQuadratic {
            names.push("log_alpha");
        }
        names
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.log_lengthscale, self.log_outputscale];
        if self.family == KernelFamily::RationalQuadratic {
            p.push(self.log_alpha);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "kernel parameter count");
        self.log_lengthscale = p[0];
        self.log_outputscale = p[1];
        if self.family == KernelFamily::RationalQuadratic {
            self.log_alpha = p[2];
        }
    }

    /// Hyperparameters exponentiated once, for evaluation in tight loops.
    #[inline]
    pub fn prepared(&self) -> PreparedKernel {
        let l = self.lengthscale();
        PreparedKernel {
            family: self.family,
            s: self.outputscale(),
            l,
            inv_l2: 1.0 / (l * l),
            alpha: self.alpha(),
        }
    }

    /// Kernel value at squared distance `r2`.
    #[inline]
    pub fn value_r2(&self, r2: f64) -> f64 {
        self.prepared().value_r2(r2)
    }

    /// Kernel value and its derivatives with respect to each log-hyperparameter
    /// (same order as [`params`](Self::params)); the third slot is zero unless RQ.
    #[inline]
    pub fn value_and_grad_r2(&self, r2: f64) -> (f64, [f64; 3]) {
        let (k, g, _) = self.prepared().full_r2(r2);
        (k, g)
    }

    /// ∂k/∂(r²). For the non-differentiable families this is taken as zero at r = 0.
    #[inline]
    pub fn d_dr2(&self, r2: f64) -> f64 {
        self.prepared().full_r2(r2).2
    }

    #[inline]
    pub fn eval(&self, x: &Point2, y: &Point2) -> f64 {
        self.value_r2(sq_dist(x, y))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PreparedKernel {
    family: KernelFamily,
    s: f64,
    l: f64,
    inv_l2: f64,
    alpha: f64,
}

impl PreparedKernel {
    #[inline]
    pub fn value_r2(&self, r2: f64) -> f64 {
        let s = self.s;
        match self.family {
            KernelFamily::Rbf => s * (-0.5 * r2 * self.inv_l2).exp(),
            KernelFamily::RationalQuadratic => {
                let a = self.alpha;
                s * (1.0 + 0.5 * r2 * self.inv_l2 / a).powf(-a)
            }
            KernelFamily::AbsoluteExponential | KernelFamily::Matern(MaternNu::Half) => s * (-r2.sqrt() / self.l).exp(),
            KernelFamily::Matern(MaternNu::ThreeHalves) => {
                let t = 3f64.sqrt() * r2.sqrt() / self.l;
                s * (1.0 + t) * (-t).exp()
            }
            KernelFamily::Matern(MaternNu::FiveHalves) => {
                let t = 5f64.sqrt() * r2.sqrt() / self.l;
                s * (1.0 + t + t * t / 3.0) * (-t).exp()
            }
        }
    }

    /// (k, ∂k/∂log-params, ∂k/∂r²)
    #[inline]
    pub fn full_r2(&self, r2: f64) -> (f64, [f64; 3], f64) {
        let s = self.s;
        let il2 = self.inv_l2;
        match self.family {
            KernelFamily::Rbf => {
                let k = s * (-0.5 * r2 * il2).exp();
                (k, [k * r2 * il2, k, 0.0], -0.5 * k * il2)
            }
            KernelFamily::RationalQuadratic => {
                let a = self.alpha;
                let u = 0.5 * r2 * il2 / a;
                let lu = u.ln_1p();
                let k = s * (-a * lu).exp();
                let dl = k * 2.0 * a * u / (1.0 + u);
                let da = k * a * (u / (1.0 + u) - lu);
                (k, [dl, k, da], -0.5 * k * il2 / (1.0 + u))
            }
            KernelFamily::AbsoluteExponential | KernelFamily::Matern(MaternNu::Half) => {
                let r = r2.sqrt();
                let k = s * (-r / self.l).exp();
                let d = if r2 <= 0.0 { 0.0 } else { -k / (2.0 * self.l * r) };
                (k, [k * r / self.l, k, 0.0], d)
            }
            KernelFamily::Matern(MaternNu::ThreeHalves) => {
                let t = 3f64.sqrt() * r2.sqrt() / self.l;
                let e = s * (-t).exp();
                (e * (1.0 + t), [e * t * t, e * (1.0 + t), 0.0], -1.5 * e * il2)
            }
            KernelFamily::Matern(MaternNu::FiveHalves) => {
                let t = 5f64.sqrt() * r2.sqrt() / self.l;
                let e = s * (-t).exp();
                let k = e * (1.0 + t + t * t / 3.0);
                (k, [e * t * t * (1.0 + t) / 3.0, k, 0.0], -5.0 * e * (1.0 + t) * il2 / 6.0)
            }
        }
    }
}

#[inline]
pub fn sq_dist(a: &Point2, b: &Point2) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

pub(crate) fn check_points(points: &[Point2]) -> Result<()> {
    match points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        Some(i) => Err(GpError::InvalidInput(format!("non-finite coordinate at point {i}"))),
        None => Ok(()),
    }
}

/// σ_s² · k_base(x, x').
pub fn eval_kernel(cfg: &KernelConfig, x: &Point2, y: &Point2) -> Result<f64> {
    check_points(&[*x, *y])?;
    Ok(cfg.eval(x, y))
}

/// Cross-covariance matrix with entry (i, j) = k(a_i, b_j).
pub fn gram_matrix(cfg: &KernelConfig, a: &[Point2], b: &[Point2]) -> Result<DMatrix<f64>> {
    check_points(a)?;
    check_points(b)?;
    Ok(gram_unchecked(cfg, a, b))
}

pub(crate) fn gram_unchecked(cfg: &KernelConfig, a: &[Point2], b: &[Point2]) -> DMatrix<f64> {
    let k = cfg.prepared();
    DMatrix::from_fn(a.len(), b.len(), |i, j| k.value_r2(sq_dist(&a[i], &b[j])))
}

/// Symmetric Gram matrix k(A, A); only the lower triangle is evaluated.
pub(crate) fn gram_sym(cfg: &KernelConfig, a: &[Point2]) -> DMatrix<f64> {
    let n = a.len();
    let k_ = cfg.prepared();
    let mut k = DMatrix::zeros(n, n);
    let diag = cfg.outputscale();
    for j in 0..n {
        k[(j, j)] = diag;
        for i in (j + 1)..n {
            let v = k_.value_r2(sq_dist(&a[i], &a[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// ∂K/∂θ for each log-hyperparameter θ, in [`KernelConfig::params`] order.
pub fn kernel_gradients(cfg: &KernelConfig, a: &[Point2], b: &[Point2]) -> Result<Vec<DMatrix<f64>>> {
    check_points(a)?;
    check_points(b)?;
    let p = cfg.n_params();
    let k = cfg.prepared();
    let mut out = vec![DMatrix::zeros(a.len(), b.len()); p];
    for (i, xa) in a.iter().enumerate() {
        for (j, xb) in b.iter().enumerate() {
            let (_, g, _) = k.full_r2(sq_dist(xa, xb));
            for (q, m) in out.iter_mut().enumerate() {
                m[(i, j)] = g[q];
            }
        }
    }
    Ok(out)
}

/// Gram matrix k(A, B) stored with its per-entry derivatives, so that
/// several weight matrices can be contracted without re-evaluating the kernel.
#[derive(Debug, Clone)]
pub(crate) struct GramGrads {
    pub k: DMatrix<f64>,
    pub d_logl: DMatrix<f64>,
    /// Present for the rational quadratic family only.
    pub d_logalpha: Option<DMatrix<f64>>,
    pub d_r2: DMatrix<f64>,
}

impl GramGrads {
    pub fn new(cfg: &KernelConfig, a: &[Point2], b: &[Point2]) -> Self {
        let pk = cfg.prepared();
        let (n, m) = (a.len(), b.len());
        let rq = cfg.family == KernelFamily::RationalQuadratic;
        let mut k = DMatrix::zeros(n, m);
        let mut d_logl = DMatrix::zeros(n, m);
        let mut d_logalpha = if rq { Some(DMatrix::zeros(n, m)) } else { None };
        let mut d_r2 = DMatrix::zeros(n, m);
        for j in 0..m {
            for i in 0..n {
                let (v, g, d) = pk.full_r2(sq_dist(&a[i], &b[j]));
                k[(i, j)] = v;
                d_logl[(i, j)] = g[0];
                if let Some(da) = d_logalpha.as_mut() {
                    da[(i, j)] = g[2];
                }
                d_r2[(i, j)] = d;
            }
        }
        GramGrads { k, d_logl, d_logalpha, d_r2 }
    }

    /// Σ_ij W_ij ∂K_ij/∂θ per log-hyperparameter.
    pub fn contract(&self, w: &DMatrix<f64>) -> [f64; 3] {
        [
            w.dot(&self.d_logl),
            w.dot(&self.k),
            self.d_logalpha.as_ref().map_or(0.0, |da| w.dot(da)),
        ]
    }
}

/// Σ_ij W_ij ∂K(A,A)_ij/∂θ per log-hyperparameter. W must be symmetric; only
/// its lower triangle is read.
pub(crate) fn contract_sym_gradients(cfg: &KernelConfig, a: &[Point2], w: &DMatrix<f64>) -> Vec<f64> {
    let mut acc = [0.0f64; 3];
    let n = a.len();
    let k = cfg.prepared();
    let (_, g0, _) = k.full_r2(0.0);
    for j in 0..n {
        let g = g0;
        let wjj = w[(j, j)];
        for q in 0..3 {
            acc[q] += wjj * g[q];
        }
        for i in (j + 1)..n {
            let (_, g, _) = k.full_r2(sq_dist(&a[i], &a[j]));
            let wij = 2.0 * w[(i, j)];
            for q in 0..3 {
                acc[q] += wij * g[q];
            }
        }
    }
    acc[..cfg.n_params()].to_vec()
}
