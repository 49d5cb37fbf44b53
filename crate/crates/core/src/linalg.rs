//! Dense Cholesky machinery shared by the exact and sparse models.
//!
//! Matrices are stored as nalgebra column-major `DMatrix`; factorization and
//! triangular solves run through faer on zero-copy views.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::matmul::matmul;
use faer::linalg::matmul::triangular::{self as tri, BlockStructure};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, MatMut, MatRef, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};

/// Jitter attempts, in normalized units: none, then 1e-8 growing by 10x to 1e-3.
pub const JITTER_SCHEDULE: [f64; 7] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3];

fn view(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn view_mut(m: &mut DMatrix<f64>) -> MatMut<'_, f64> {
    let (r, c) = m.shape();
    MatMut::from_column_major_slice_mut(m.as_mut_slice(), r, c)
}

/// faer's wide SIMD kernels return with dirty upper vector registers, after
/// which every SSE-encoded instruction (libm's exp/log included) pays a state
/// transition penalty. Clearing them restores scalar throughput.
#[inline]
fn settle_simd() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: vzeroupper only zeroes the upper halves of the vector registers, which
        // no live Rust value occupies across this call; AVX support was checked above.
        unsafe { std::arch::asm!("vzeroupper", options(nomem, nostack, preserves_flags)) };
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, together
/// with the diagonal jitter that had to be added to obtain it.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factor `a`, escalating diagonal jitter through [`JITTER_SCHEDULE`].
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        assert!(a.is_square(), "Cholesky of a non-square matrix");
        let n = a.nrows();
        for &jitter in JITTER_SCHEDULE.iter() {
            let mut work = a.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    work[(i, i)] += jitter;
                }
            }
            if let Some(l) = try_llt(&work) {
                return Ok(Cholesky { l, jitter });
            }
        }
        Err(GpError::IllConditioned {
            max_jitter: JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1],
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Jitter that was added to the diagonal before factoring.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// L⁻¹ B
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        solve_lower_triangular_in_place(view(&self.l), view_mut(&mut x), Par::Seq);
        settle_simd();
        x
    }

    /// L⁻ᵀ B
    pub fn solve_upper(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        solve_upper_triangular_in_place(view(&self.l).transpose(), view_mut(&mut x), Par::Seq);
        settle_simd();
        x
    }

    /// (L Lᵀ)⁻¹ B
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        solve_lower_triangular_in_place(view(&self.l), view_mut(&mut x), Par::Seq);
        solve_upper_triangular_in_place(view(&self.l).transpose(), view_mut(&mut x), Par::Seq);
        settle_simd();
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        DVector::from_column_slice(self.solve(&m).as_slice())
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        DVector::from_column_slice(self.solve_lower(&m).as_slice())
    }

    /// Explicit (L Lᵀ)⁻¹.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let par = Par::Seq;
        let mut mem = MemBuffer::new(llt::inverse::inverse_scratch::<f64>(n, par));
        llt::inverse::inverse(view_mut(&mut inv), view(&self.l), par, MemStack::new(&mut mem));
        settle_simd();
        // only the lower triangle is written
        for j in 0..n {
            for i in (j + 1)..n {
                inv[(j, i)] = inv[(i, j)];
            }
        }
        inv
    }
}

/// op(A) op(B), where op transposes when the flag is set.
pub fn gemm(a: &DMatrix<f64>, ta: bool, b: &DMatrix<f64>, tb: bool) -> DMatrix<f64> {
    let va = if ta { view(a).transpose() } else { view(a) };
    let vb = if tb { view(b).transpose() } else { view(b) };
    assert_eq!(va.ncols(), vb.nrows(), "gemm inner dimension");
    let mut out = DMatrix::zeros(va.nrows(), vb.ncols());
    matmul(view_mut(&mut out), Accum::Replace, va, vb, 1.0, Par::Seq);
    settle_simd();
    out
}

/// A Aᵀ, computing one triangle and mirroring it.
pub fn sym_outer(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    tri::matmul(
        view_mut(&mut out),
        BlockStructure::TriangularLower,
        Accum::Replace,
        view(a),
        BlockStructure::Rectangular,
        view(a).transpose(),
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    settle_simd();
    for j in 0..n {
        for i in (j + 1)..n {
            out[(j, i)] = out[(i, j)];
        }
    }
    out
}

fn try_llt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let llt = view(a).llt(Side::Lower);
    settle_simd();
    let llt = llt.ok()?;
    let lf = llt.L();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            l[(i, j)] = lf[(i, j)];
        }
    }
    if (0..n).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0) {
        Some(l)
    } else {
        None
    }
}
