//! Sparse variational GP with a Gaussian q(u) over inducing values.
//!
//! q(u) = N(m(Z) + mvec, L Lᵀ). The mean is stored as an offset from the prior
//! mean at Z so that the KL term does not depend on the mean function.
//!
//! Training works in whitened coordinates u = m(Z) + Lz v with Kzz = Lz Lzᵀ.
//! By default q(v) moves by natural-gradient steps, which have a closed form
//! for a Gaussian likelihood, while Adam updates Z and the hyperparameters.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{GpError, Result};
use crate::exact::{Trained, NOISE_FLOOR};
use crate::kernels::{check_points, gram_sym, gram_unchecked, GramGrads, KernelConfig, Point2};
use crate::linalg::{gemm, sym_outer, Cholesky};
use crate::mean::MeanFunction;
use crate::method::{MethodConfig, INIT_NOISE};
use crate::terrain::Dataset;
use crate::optim::{Adam, AdamConfig, BatchSize};
use crate::rng::{stream, STREAM_BATCH_SHUFFLE, STREAM_INDUCING_INIT};

const PREDICT_CHUNK: usize = 1024;

/// Initial diagonal of the variational factor L.
pub const INIT_L_DIAG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvgpLikelihood {
    Gaussian { log_variance: f64 },
    /// Per-point variances supplied with each batch and never trained.
    Heteroscedastic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgpState {
    pub z: Vec<Point2>,
    /// Offset of the q(u) mean from m(Z).
    pub mvec: DVector<f64>,
    /// Lower-triangular with positive diagonal.
    pub l: DMatrix<f64>,
    pub kernel: KernelConfig,
    pub mean: MeanFunction,
    pub likelihood: SvgpLikelihood,
}

/// m distinct training inputs chosen uniformly without replacement.
pub fn init_inducing(x: &[Point2], m: usize, seed: u64) -> Result<Vec<Point2>> {
    if m == 0 || m > x.len() {
        return Err(GpError::InvalidConfig(format!(
            "inducing count must be in 1..={} (got {m})",
            x.len()
        )));
    }
    let mut rng = stream(seed, STREAM_INDUCING_INIT);
    let idx = rand::seq::index::sample(&mut rng, x.len(), m);
    Ok(idx.iter().map(|i| x[i]).collect())
}

impl SvgpState {
    /// Fresh state with mvec = 0 and L = 0.1·I.
    pub fn new(z: Vec<Point2>, kernel: KernelConfig, mean: MeanFunction, likelihood: SvgpLikelihood) -> Result<Self> {
        if z.is_empty() {
            return Err(GpError::InvalidConfig("at least one inducing point is required".into()));
        }
        check_points(&z)?;
        let m = z.len();
        Ok(SvgpState {
            z,
            mvec: DVector::zeros(m),
            l: DMatrix::from_diagonal_element(m, m, INIT_L_DIAG),
            kernel,
            mean,
            likelihood,
        })
    }

    /// Fresh state whose whitened coordinates are mean 0 and factor 0.1·I,
    /// i.e. mvec = 0 and L = 0.1·chol(Kzz).
    pub fn new_whitened(z: Vec<Point2>, kernel: KernelConfig, mean: MeanFunction, likelihood: SvgpLikelihood) -> Result<Self> {
        from_whitened(&Self::new(z, kernel, mean, likelihood)?)
    }

    pub fn num_inducing(&self) -> usize {
        self.z.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.z.len();
        if m == 0 || self.mvec.len() != m || self.l.shape() != (m, m) {
            return Err(GpError::ShapeMismatch {
                expected: format!("{m} inducing values and a {m}x{m} factor"),
                actual: format!("{} and {:?}", self.mvec.len(), self.l.shape()),
            });
        }
        check_points(&self.z)?;
        if (0..m).any(|i| !(self.l[(i, i)] > 0.0 && self.l[(i, i)].is_finite())) {
            return Err(GpError::InvalidInput("variational factor needs a positive diagonal".into()));
        }
        Ok(())
    }

    fn n_l(&self) -> usize {
        let m = self.z.len();
        m * (m + 1) / 2
    }

    /// Number of entries in [`SvgpState::flatten`].
    pub fn n_params(&self) -> usize {
        let m = self.z.len();
        3 * m + self.n_l() + self.kernel.n_params() + self.mean.is_learnable() as usize + self.learns_noise() as usize
    }

    fn learns_noise(&self) -> bool {
        matches!(self.likelihood, SvgpLikelihood::Gaussian { .. })
    }

    /// [Z (x, y interleaved)] [mvec] [L lower, column-major, log on the diagonal]
    /// [kernel] [mean constant?] [log noise?]
    pub fn flatten(&self) -> Vec<f64> {
        let m = self.z.len();
        let mut p = Vec::with_capacity(self.n_params());
        for z in &self.z {
            p.extend_from_slice(z);
        }
        p.extend(self.mvec.iter());
        for j in 0..m {
            p.push(self.l[(j, j)].ln());
            for i in (j + 1)..m {
                p.push(self.l[(i, j)]);
            }
        }
        p.extend(self.kernel.params());
        if let MeanFunction::Constant(c) = self.mean {
            p.push(c);
        }
        if let SvgpLikelihood::Gaussian { log_variance } = self.likelihood {
            p.push(log_variance);
        }
        p
    }

    pub fn unflatten(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "flat parameter length");
        let m = self.z.len();
        for (k, z) in self.z.iter_mut().enumerate() {
            *z = [p[2 * k], p[2 * k + 1]];
        }
        let mut i0 = 2 * m;
        self.mvec.copy_from_slice(&p[i0..i0 + m]);
        i0 += m;
        for j in 0..m {
            self.l[(j, j)] = p[i0].exp();
            i0 += 1;
            for i in (j + 1)..m {
                self.l[(i, j)] = p[i0];
                i0 += 1;
            }
        }
        let nk = self.kernel.n_params();
        self.kernel.set_params(&p[i0..i0 + nk]);
        i0 += nk;
        if let MeanFunction::Constant(c) = &mut self.mean {
            *c = p[i0];
            i0 += 1;
        }
        if let SvgpLikelihood::Gaussian { log_variance } = &mut self.likelihood {
            *log_variance = p[i0];
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let m = self.z.len();
        let mut v = Vec::with_capacity(self.n_params());
        for k in 0..m {
            v.push(format!("z[{k}].x"));
            v.push(format!("z[{k}].y"));
        }
        v.extend((0..m).map(|k| format!("mvec[{k}]")));
        for j in 0..m {
            v.push(format!("log_l[{j},{j}]"));
            v.extend(((j + 1)..m).map(|i| format!("l[{i},{j}]")));
        }
        v.extend(self.kernel.param_names().into_iter().map(String::from));
        if self.mean.is_learnable() {
            v.push("mean_constant".into());
        }
        if self.learns_noise() {
            v.push("log_noise".into());
        }
        v
    }

    /// Which flat entries belong to Z and to the kernel, mean, and noise.
    fn blocks(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let m = self.z.len();
        let hyper_start = 3 * m + self.n_l();
        (0..2 * m, hyper_start..self.n_params())
    }
}

/// E_{f ~ N(μ, s)}[log N(y | f, v)] in closed form.
pub fn expected_loglik(qf_mean: f64, qf_var: f64, y: f64, noise_var: f64) -> Result<f64> {
    if noise_var.is_nan() || noise_var <= 0.0 {
        return Err(GpError::InvalidInput(format!("noise variance must be positive (got {noise_var})")));
    }
    if qf_var < 0.0 {
        return Err(GpError::InvalidInput(format!("predictive variance must be non-negative (got {qf_var})")));
    }
    Ok(ell(qf_mean, qf_var, y, noise_var))
}

#[inline]
fn ell(mu: f64, s: f64, y: f64, v: f64) -> f64 {
    let d = y - mu;
    -0.5 * (2.0 * PI * v).ln() - (d * d + s) / (2.0 * v)
}

struct KlParts {
    value: f64,
    /// Lz⁻¹ L
    w: DMatrix<f64>,
    beta: DVector<f64>,
}

fn kl_parts(state: &SvgpState, chol: &Cholesky) -> KlParts {
    let m = state.z.len();
    let w = chol.solve_lower(&state.l);
    let beta = chol.solve_vec(&state.mvec);
    let trace = w.norm_squared();
    let quad = state.mvec.dot(&beta);
    let log_det_s: f64 = 2.0 * (0..m).map(|i| state.l[(i, i)].ln()).sum::<f64>();
    let value = 0.5 * (trace + quad - m as f64 + chol.log_det() - log_det_s);
    KlParts { value, w, beta }
}

/// KL[q(u) ‖ p(u)] with p(u) = N(m(Z), Kzz).
pub fn kl_term(state: &SvgpState) -> Result<f64> {
    state.validate()?;
    let chol = Cholesky::factor(&gram_sym(&state.kernel, &state.z))?;
    Ok(kl_parts(state, &chol).value)
}

/// Marginal q(f) at each query: mean and latent variance (clamped at 0).
pub fn predictive_qf(state: &SvgpState, xs: &[Point2]) -> Result<(Vec<f64>, Vec<f64>)> {
    state.validate()?;
    check_points(xs)?;
    let chol = Cholesky::factor(&gram_sym(&state.kernel, &state.z))?;
    let beta = chol.solve_vec(&state.mvec);
    let prior_var = state.kernel.value_r2(0.0);
    let mut mean = Vec::with_capacity(xs.len());
    let mut var = Vec::with_capacity(xs.len());
    for chunk in xs.chunks(PREDICT_CHUNK) {
        let kzx = gram_unchecked(&state.kernel, &state.z, chunk);
        let mu = kzx.tr_mul(&beta);
        let v = chol.solve_lower(&kzx);
        let a = chol.solve_upper(&v);
        let lta = gemm(&state.l, true, &a, false);
        for (i, p) in chunk.iter().enumerate() {
            mean.push(state.mean.eval(p) + mu[i]);
            let s = prior_var - v.column(i).norm_squared() + lta.column(i).norm_squared();
            var.push(s.max(0.0));
        }
    }
    Ok((mean, var))
}

/// Minibatch ELBO and its gradient in [`SvgpState::flatten`] layout.
#[derive(Debug, Clone)]
pub struct ElboEval {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Checks shared by both ELBO parametrizations; returns the per-point noise
/// variances of the batch.
fn batch_noise(state: &SvgpState, x: &[Point2], y: &[f64], noise: Option<&[f64]>) -> Result<Vec<f64>> {
    state.validate()?;
    let b = x.len();
    if b == 0 {
        return Err(GpError::EmptyDataset("empty minibatch".into()));
    }
    if y.len() != b || noise.is_some_and(|v| v.len() != b) {
        return Err(GpError::ShapeMismatch {
            expected: format!("{b} targets and variances"),
            actual: format!("{} targets", y.len()),
        });
    }
    check_points(x)?;
    match (state.likelihood, noise) {
        (SvgpLikelihood::Gaussian { log_variance }, None) => Ok(vec![log_variance.exp(); b]),
        (SvgpLikelihood::Heteroscedastic, Some(v)) => {
            if let Some(i) = v.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(GpError::InvalidInput(format!("noise variance at index {i} must be positive")));
            }
            Ok(v.to_vec())
        }
        (SvgpLikelihood::Gaussian { .. }, Some(_)) => {
            Err(GpError::InvalidConfig("homoscedastic likelihood takes no per-point noise".into()))
        }
        (SvgpLikelihood::Heteroscedastic, None) => {
            Err(GpError::InvalidConfig("heteroscedastic likelihood needs per-point noise".into()))
        }
    }
}

/// Scaled expected log-likelihood of a batch and its derivatives with respect
/// to each marginal mean, marginal variance, and the log noise.
struct BatchTerms {
    value: f64,
    g_mu: DVector<f64>,
    g_s: DVector<f64>,
    g_noise: f64,
}

fn batch_terms(mu: &[f64], s: &[f64], y: &[f64], var: &[f64], c: f64) -> BatchTerms {
    let b = y.len();
    let mut t = BatchTerms {
        value: 0.0,
        g_mu: DVector::zeros(b),
        g_s: DVector::zeros(b),
        g_noise: 0.0,
    };
    for i in 0..b {
        let (v, d) = (var[i], y[i] - mu[i]);
        t.value += c * ell(mu[i], s[i], y[i], v);
        t.g_mu[i] = c * d / v;
        t.g_s[i] = -c / (2.0 * v);
        t.g_noise += c * (-0.5 + (d * d + s[i]) / (2.0 * v));
    }
    t
}

/// Write the Z, kernel, mean, and noise entries of `grad` given the adjoints
/// of Kzz (symmetric) and Kzx.
#[allow(clippy::too_many_arguments)]
fn shared_grads(
    state: &SvgpState,
    x: &[Point2],
    gzz: &GramGrads,
    gzx: &GramGrads,
    g_zz: &DMatrix<f64>,
    g_zx: &DMatrix<f64>,
    t: &BatchTerms,
    grad: &mut [f64],
) {
    let m = state.z.len();
    let b = x.len();
    let mut hyper = gzz.contract(g_zz);
    for (h, c) in hyper.iter_mut().zip(gzx.contract(g_zx)) {
        *h += c;
    }
    // ∂/∂z_j = 2 Σ_k (G_jk + G_kj) k'(r²_jk) (z_j − z_k) + 2 Σ_i Gzx_ji k'(r²_ji) (z_j − x_i)
    let q = g_zz.component_mul(&gzz.d_r2);
    let qx = g_zx.component_mul(&gzx.d_r2);
    let zmat = DMatrix::from_fn(m, 2, |i, d| state.z[i][d]);
    let xmat = DMatrix::from_fn(b, 2, |i, d| x[i][d]);
    let row_w = q.column_sum() + q.row_sum().transpose() + qx.column_sum();
    let pull = &q * &zmat + q.tr_mul(&zmat) + &qx * &xmat;
    for j in 0..m {
        for d in 0..2 {
            grad[2 * j + d] = 2.0 * (row_w[j] * state.z[j][d] - pull[(j, d)]);
        }
    }
    // the k(x_i, x_i) term of s_i
    hyper[1] += state.kernel.value_r2(0.0) * t.g_s.sum();

    let mut i0 = state.blocks().1.start;
    let nk = state.kernel.n_params();
    grad[i0..i0 + nk].copy_from_slice(&hyper[..nk]);
    i0 += nk;
    if state.mean.is_learnable() {
        grad[i0] = t.g_mu.sum();
        i0 += 1;
    }
    if state.learns_noise() {
        grad[i0] = t.g_noise;
    }
}

/// Write the L block of `grad` from the raw adjoint of the lower factor.
fn factor_grads(l: &DMatrix<f64>, gl: &DMatrix<f64>, grad: &mut [f64]) {
    let m = l.nrows();
    let mut i0 = 3 * m;
    for j in 0..m {
        grad[i0] = gl[(j, j)] * l[(j, j)];
        i0 += 1;
        for i in (j + 1)..m {
            grad[i0] = gl[(i, j)];
            i0 += 1;
        }
    }
}

/// (n_total / b)·Σ E_q[log p(y_i | f_i)] − KL over one batch.
///
/// `noise` supplies per-point variances when the likelihood is
/// heteroscedastic and must be `None` otherwise.
pub fn elbo_minibatch(
    state: &SvgpState,
    x: &[Point2],
    y: &[f64],
    n_total: usize,
    noise: Option<&[f64]>,
) -> Result<ElboEval> {
    let var = batch_noise(state, x, y, noise)?;
    let b = x.len();
    let m = state.z.len();
    let kern = &state.kernel;
    let gzz = GramGrads::new(kern, &state.z, &state.z);
    let chol = Cholesky::factor(&gzz.k)?;
    let kl = kl_parts(state, &chol);
    let beta = &kl.beta;
    let gzx = GramGrads::new(kern, &state.z, x);
    let kzx = &gzx.k;
    let a = chol.solve(kzx);
    let lta = gemm(&state.l, true, &a, false);
    let kdiag = kern.value_r2(0.0);

    let mu_off = kzx.tr_mul(beta);
    let mu: Vec<f64> = (0..b).map(|i| state.mean.eval(&x[i]) + mu_off[i]).collect();
    let s: Vec<f64> = (0..b)
        .map(|i| kdiag - kzx.column(i).dot(&a.column(i)) + lta.column(i).norm_squared())
        .collect();
    let t = batch_terms(&mu, &s, y, &var, n_total as f64 / b as f64);
    let (g_mu, g_s) = (&t.g_mu, &t.g_s);
    let value = t.value - kl.value;

    // P = Kzz⁻¹ L, B = P (Lᵀ A)
    let p = chol.solve_upper(&kl.w);
    let bmat = gemm(&p, false, &lta, false);
    let a_gmu = &a * g_mu;
    let mut a_gs = a.clone();
    for (i, mut col) in a_gs.column_iter_mut().enumerate() {
        col *= g_s[i];
    }

    let mut grad = vec![0.0; state.n_params()];
    for k in 0..m {
        grad[2 * m + k] = a_gmu[k] - beta[k];
    }
    let mut gl = gemm(&a_gs, false, &lta, true) * 2.0 - &p;
    for j in 0..m {
        gl[(j, j)] += 1.0 / state.l[(j, j)];
    }
    factor_grads(&state.l, &gl, &mut grad);

    // dELBO = Σ G ⊙ dKzz + Σ Gzx ⊙ dKzx
    let kinv = chol.inverse();
    let a_minus_2b = &a - &bmat * 2.0;
    let mut g_zz = gemm(&a_gs, false, &a_minus_2b, true);
    let ppt = sym_outer(&p);
    for j in 0..m {
        for i in 0..m {
            g_zz[(i, j)] += 0.5 * (ppt[(i, j)] + beta[i] * beta[j] - kinv[(i, j)]) - a_gmu[i] * beta[j];
        }
    }
    let mut g_zx = (&bmat - &a) * 2.0;
    for (i, mut col) in g_zx.column_iter_mut().enumerate() {
        col *= g_s[i];
        col += beta * g_mu[i];
    }
    shared_grads(state, x, &gzz, &gzx, &g_zz, &g_zx, &t, &mut grad);
    Ok(ElboEval { value, grad })
}

/// Same bound as [`elbo_minibatch`], with `state.mvec` and `state.l` read in
/// whitened coordinates: u = m(Z) + Lz v, v ~ N(mvec, L Lᵀ), Kzz = Lz Lzᵀ.
/// The gradient is in the same flat layout, with respect to those coordinates.
pub fn elbo_minibatch_whitened(
    state: &SvgpState,
    x: &[Point2],
    y: &[f64],
    n_total: usize,
    noise: Option<&[f64]>,
) -> Result<ElboEval> {
    let var = batch_noise(state, x, y, noise)?;
    let b = x.len();
    let m = state.z.len();
    let (w_mean, w) = (&state.mvec, &state.l);
    let kern = &state.kernel;
    let gzz = GramGrads::new(kern, &state.z, &state.z);
    let chol = Cholesky::factor(&gzz.k)?;
    let gzx = GramGrads::new(kern, &state.z, x);
    // A = Lz⁻¹ Kzx
    let a = chol.solve_lower(&gzx.k);
    let wta = gemm(w, true, &a, false);
    let kdiag = kern.value_r2(0.0);

    let mu_off = a.tr_mul(w_mean);
    let mu: Vec<f64> = (0..b).map(|i| state.mean.eval(&x[i]) + mu_off[i]).collect();
    let s: Vec<f64> = (0..b)
        .map(|i| kdiag - a.column(i).norm_squared() + wta.column(i).norm_squared())
        .collect();
    let t = batch_terms(&mu, &s, y, &var, n_total as f64 / b as f64);
    let log_det_w: f64 = (0..m).map(|i| w[(i, i)].ln()).sum();
    let kl = 0.5 * (w.norm_squared() + w_mean.norm_squared() - m as f64) - log_det_w;
    let value = t.value - kl;

    let mut grad = vec![0.0; state.n_params()];
    let a_gmu = &a * &t.g_mu;
    for k in 0..m {
        grad[2 * m + k] = a_gmu[k] - w_mean[k];
    }
    let mut a_gs = a.clone();
    for (i, mut col) in a_gs.column_iter_mut().enumerate() {
        col *= t.g_s[i];
    }
    let mut gl = gemm(&a_gs, false, &wta, true) * 2.0 - w;
    for j in 0..m {
        gl[(j, j)] += 1.0 / w[(j, j)];
    }
    factor_grads(w, &gl, &mut grad);

    // adjoint of A, then through A = Lz⁻¹ Kzx
    let mut a_bar = (gemm(w, false, &wta, false) - &a) * 2.0;
    for (i, mut col) in a_bar.column_iter_mut().enumerate() {
        col *= t.g_s[i];
        col += w_mean * t.g_mu[i];
    }
    let g_zx = chol.solve_upper(&a_bar);
    let mut lz_bar = -gemm(&g_zx, false, &a, true);
    lz_bar.fill_upper_triangle(0.0, 1);
    // Cholesky backprop: Kzz adjoint = Lz⁻ᵀ Φ(Lzᵀ L̄) Lz⁻¹, Φ = lower part with halved diagonal
    let mut phi = gemm(chol.l(), true, &lz_bar, false);
    phi.fill_upper_triangle(0.0, 1);
    for j in 0..m {
        phi[(j, j)] *= 0.5;
    }
    let half = chol.solve_upper(&phi);
    let kbar = chol.solve_upper(&half.transpose()).transpose();
    let g_zz = (&kbar + kbar.transpose()) * 0.5;
    shared_grads(state, x, &gzz, &gzx, &g_zz, &g_zx, &t, &mut grad);
    Ok(ElboEval { value, grad })
}

/// Re-express q(u) in whitened coordinates (see [`elbo_minibatch_whitened`]).
pub fn to_whitened(state: &SvgpState) -> Result<SvgpState> {
    state.validate()?;
    let chol = Cholesky::factor(&gram_sym(&state.kernel, &state.z))?;
    let mut out = state.clone();
    out.mvec = chol.solve_lower_vec(&state.mvec);
    out.l = chol.solve_lower(&state.l);
    out.l.fill_upper_triangle(0.0, 1);
    Ok(out)
}

/// Inverse of [`to_whitened`].
pub fn from_whitened(state: &SvgpState) -> Result<SvgpState> {
    state.validate()?;
    let chol = Cholesky::factor(&gram_sym(&state.kernel, &state.z))?;
    let mut out = state.clone();
    out.mvec = chol.l() * &state.mvec;
    out.l = chol.l() * &state.l;
    out.l.fill_upper_triangle(0.0, 1);
    Ok(out)
}

/// Default natural-gradient step size for q(u).
pub const NATGRAD_STEP: f64 = 0.1;

/// q(v) of the whitened coordinates held as natural parameters:
/// precision P = S⁻¹ and shift h = P·mean.
struct NaturalQ {
    prec: DMatrix<f64>,
    shift: DVector<f64>,
}

impl NaturalQ {
    fn from_whitened(mean: &DVector<f64>, w: &DMatrix<f64>) -> Result<Self> {
        let prec = Cholesky::factor(&sym_outer(w))?.inverse();
        let shift = &prec * mean;
        Ok(NaturalQ { prec, shift })
    }

    /// Whitened mean and lower factor of the covariance.
    fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        // J P J = R Rᵀ with J the reversal gives P⁻¹ = W Wᵀ, W = J R⁻ᵀ J lower
        let m = self.prec.nrows();
        let flipped = DMatrix::from_fn(m, m, |i, j| self.prec[(m - 1 - i, m - 1 - j)]);
        let r_inv_t = Cholesky::factor(&flipped)?.solve_upper(&DMatrix::identity(m, m));
        let w = DMatrix::from_fn(m, m, |i, j| r_inv_t[(m - 1 - i, m - 1 - j)]);
        let mean = &w * w.tr_mul(&self.shift);
        Ok((mean, w))
    }

    /// One natural-gradient step of size `gamma` toward the batch estimate of
    /// the optimal q, which is exact for a Gaussian likelihood:
    /// P̂ = I + c·Σ aᵢaᵢᵀ/vᵢ, ĥ = c·Σ aᵢ(yᵢ − m(xᵢ))/vᵢ, A = Lz⁻¹ Kzx, c = n/b.
    fn step(
        &mut self,
        state: &SvgpState,
        x: &[Point2],
        y: &[f64],
        var: &[f64],
        n_total: usize,
        gamma: f64,
    ) -> Result<()> {
        let m = state.z.len();
        let c = n_total as f64 / x.len() as f64;
        let chol = Cholesky::factor(&gram_sym(&state.kernel, &state.z))?;
        let mut a = chol.solve_lower(&gram_unchecked(&state.kernel, &state.z, x));
        let mut h = DVector::zeros(m);
        for (i, mut col) in a.column_iter_mut().enumerate() {
            h.axpy(c * (y[i] - state.mean.eval(&x[i])) / var[i], &col, 1.0);
            col *= (c / var[i]).sqrt();
        }
        let mut p = sym_outer(&a);
        for i in 0..m {
            p[(i, i)] += 1.0;
        }
        self.prec = &self.prec * (1.0 - gamma) + p * gamma;
        self.shift = &self.shift * (1.0 - gamma) + h * gamma;
        Ok(())
    }
}

/// Training knobs for an SVGP.
#[derive(Debug, Clone, Copy)]
pub struct SvgpFitOptions {
    pub adam: AdamConfig,
    pub optimize_inducing: bool,
    pub optimize_hyperparameters: bool,
    /// Update q(u) by natural-gradient steps of this size instead of Adam.
    /// Implies whitened coordinates.
    pub natural_gradient: Option<f64>,
    /// Take Adam steps in whitened coordinates ([`elbo_minibatch_whitened`]).
    /// The returned state is always in the plain parametrization.
    pub whiten: bool,
}

impl SvgpFitOptions {
    pub fn new(adam: AdamConfig) -> Self {
        SvgpFitOptions {
            adam,
            optimize_inducing: true,
            optimize_hyperparameters: true,
            natural_gradient: Some(NATGRAD_STEP),
            whiten: true,
        }
    }

    /// Adam on every parameter in the plain parametrization.
    pub fn plain(adam: AdamConfig) -> Self {
        SvgpFitOptions {
            natural_gradient: None,
            whiten: false,
            ..Self::new(adam)
        }
    }
}

/// Maximize the ELBO with minibatch Adam starting from `state`.
///
/// The loss logged per epoch is the mean over its batches of −ELBO / n. With
/// natural gradients on, each batch first takes the Adam step on Z and the
/// hyperparameters, then the q(u) step at the new values.
pub fn train_svgp(
    mut state: SvgpState,
    x: &[Point2],
    y: &[f64],
    noise: Option<&[f64]>,
    opts: &SvgpFitOptions,
    seed: u64,
) -> Result<Trained<SvgpState>> {
    opts.adam.validate()?;
    state.validate()?;
    let n = x.len();
    if n == 0 {
        return Err(GpError::EmptyDataset("SVGP needs at least one training point".into()));
    }
    if y.len() != n || noise.is_some_and(|v| v.len() != n) {
        return Err(GpError::ShapeMismatch {
            expected: format!("{n} targets and variances"),
            actual: format!("{} targets", y.len()),
        });
    }
    if let Some(g) = opts.natural_gradient {
        if !(g > 0.0 && g <= 1.0) {
            return Err(GpError::InvalidConfig(format!("natural-gradient step must be in (0, 1] (got {g})")));
        }
    }
    let batch = match opts.adam.batch_size {
        BatchSize::Full => n,
        BatchSize::Fixed(b) => b.min(n),
    };
    let whiten = opts.whiten || opts.natural_gradient.is_some();
    let elbo = if whiten {
        state = to_whitened(&state)?;
        elbo_minibatch_whitened
    } else {
        elbo_minibatch
    };
    let mut natural = match opts.natural_gradient {
        Some(_) => Some(NaturalQ::from_whitened(&state.mvec, &state.l)?),
        None => None,
    };
    let mut rng = stream(seed, STREAM_BATCH_SHUFFLE);
    let mut params = state.flatten();
    let mut adam = Adam::new(opts.adam, state.param_names());
    let (z_block, hyper_block) = state.blocks();
    let q_block = z_block.end..hyper_block.start;
    let noise_idx = state.learns_noise().then(|| params.len() - 1);
    let floor = NOISE_FLOOR.ln();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(opts.adam.max_epochs);
    let mut bx = Vec::with_capacity(batch);
    let mut by = Vec::with_capacity(batch);
    let mut bv = Vec::with_capacity(batch);
    for epoch in 0..opts.adam.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for idx in order.chunks(batch) {
            bx.clear();
            by.clear();
            bv.clear();
            for &i in idx {
                bx.push(x[i]);
                by.push(y[i]);
                if let Some(v) = noise {
                    bv.push(v[i]);
                }
            }
            let bnoise = noise.map(|_| bv.as_slice());
            state.unflatten(&params);
            let e = elbo(&state, &bx, &by, n, bnoise)?;
            let loss = -e.value / n as f64;
            if !loss.is_finite() {
                return Err(GpError::Divergence { parameter: "loss".into() });
            }
            epoch_loss += loss;
            n_batches += 1;
            let mut grad: Vec<f64> = e.grad.iter().map(|g| -g / n as f64).collect();
            if !opts.optimize_inducing {
                grad[z_block.clone()].fill(0.0);
            }
            if !opts.optimize_hyperparameters {
                grad[hyper_block.clone()].fill(0.0);
            }
            if natural.is_some() {
                grad[q_block.clone()].fill(0.0);
            }
            adam.step(&mut params, &grad)?;
            if let Some(k) = noise_idx {
                params[k] = params[k].max(floor);
            }
            if let (Some(nq), Some(gamma)) = (natural.as_mut(), opts.natural_gradient) {
                state.unflatten(&params);
                let var = batch_noise(&state, &bx, &by, bnoise)?;
                nq.step(&state, &bx, &by, &var, n, gamma)?;
                let (mean, w) = nq.moments()?;
                params[q_block.clone()].copy_from_slice(&q_params(&mean, &w));
            }
        }
        let loss = epoch_loss / n_batches as f64;
        debug!("svgp epoch {epoch}: loss {loss:.6}");
        losses.push(loss);
    }
    state.unflatten(&params);
    if whiten {
        state = from_whitened(&state)?;
    }
    Ok(Trained { model: state, losses })
}

/// The mvec and L entries of the flat layout.
fn q_params(mean: &DVector<f64>, l: &DMatrix<f64>) -> Vec<f64> {
    let m = mean.len();
    let mut p: Vec<f64> = mean.iter().copied().collect();
    for j in 0..m {
        p.push(l[(j, j)].ln());
        p.extend(((j + 1)..m).map(|i| l[(i, j)]));
    }
    p
}

/// Fit an SVGP with a method's kernel, inducing count, and Adam schedule.
///
/// With `noise = None` a homoscedastic Gaussian noise is learned; otherwise the
/// given per-point variances are used as a fixed heteroscedastic likelihood.
pub fn fit_svgp(
    data: &Dataset,
    method: &MethodConfig,
    mean: MeanFunction,
    noise: Option<&[f64]>,
) -> Result<Trained<SvgpState>> {
    method.validate()?;
    let z = init_inducing(&data.x, method.num_inducing, method.seed)?;
    let likelihood = match noise {
        Some(_) => SvgpLikelihood::Heteroscedastic,
        None => SvgpLikelihood::Gaussian {
            log_variance: INIT_NOISE.ln(),
        },
    };
    let state = SvgpState::new_whitened(z, method.initial_kernel(), mean, likelihood)?;
    train_svgp(state, &data.x, &data.y, noise, &SvgpFitOptions::new(method.adam), method.seed)
}
