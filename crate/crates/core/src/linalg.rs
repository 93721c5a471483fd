//! Dense complex linear algebra helpers.
//!
//! nalgebra's generic matrix product is slow for `Complex<f64>`, so the hot
//! products here split operands into real and imaginary parts and go through
//! the real GEMM kernel instead.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn split(a: &CMat) -> (RMat, RMat) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub fn join(re: &RMat, im: &RMat) -> CMat {
    re.zip_map(im, C64::new)
}

/// Complex product `a * b` via four real products.
pub fn cmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "cmul dimension mismatch");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

/// `a^H * b` without materializing the adjoint in complex form.
pub fn cmul_adj(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.nrows(), b.nrows(), "cmul_adj dimension mismatch");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let (art, ait) = (ar.transpose(), ai.transpose());
    let re = &art * &br + &ait * &bi;
    let im = &art * &bi - &ait * &br;
    join(&re, &im)
}

/// Real-by-complex product.
pub fn rcmul(a: &RMat, b: &CMat) -> CMat {
    let (br, bi) = split(b);
    join(&(a * &br), &(a * &bi))
}

pub fn cmatvec(a: &CMat, x: &CVec) -> CVec {
    a * x
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn conj_mat(a: &CMat) -> CMat {
    a.map(|z| z.conj())
}

pub fn conj_vec(x: &CVec) -> CVec {
    x.map(|z| z.conj())
}

pub fn norm_sqr(x: &CVec) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frob_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(x: &CVec) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Real representation `[[Re X, -Im X], [Im X, Re X]]` of a complex matrix.
pub fn real_rep(x: &CMat) -> RMat {
    let (r, c) = x.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = x[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// `[Re x; Im x]`.
pub fn stack_real(x: &CVec) -> RVec {
    let n = x.len();
    RVec::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

pub fn unstack_real(x: &RVec) -> CVec {
    let n = x.len() / 2;
    CVec::from_fn(n, |i, _| C64::new(x[i], x[i + n]))
}

/// Cholesky factor of a Hermitian matrix, symmetrizing first.
pub fn cholesky_c(a: &CMat) -> Result<Cholesky<C64, Dyn>> {
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    Cholesky::new(sym).ok_or(Error::NotPositiveDefinite("complex Hermitian system"))
}

pub fn cholesky_r(a: &RMat) -> Result<Cholesky<f64, Dyn>> {
    let sym = (a + a.transpose()) * 0.5;
    Cholesky::new(sym).ok_or(Error::NotPositiveDefinite("real symmetric system"))
}

/// Diagonal of `A^{-1}` from a Cholesky factor `A = L L^T`.
pub fn inverse_diagonal(chol: &Cholesky<f64, Dyn>) -> RVec {
    let l = chol.l();
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&RMat::identity(n, n))
        .expect("Cholesky factor has a nonzero diagonal");
    // (L L^T)^{-1} = L^{-T} L^{-1}; diagonal entry j is the squared norm of column j of L^{-1}.
    RVec::from_fn(n, |j, _| linv.column(j).norm_squared())
}

/// Applies `I_N ⊗ Q` to a stacked vector of `n_blocks` segments.
pub fn block_apply(q: &CMat, x: &CVec, n_blocks: usize) -> CVec {
    let (rows, cols) = q.shape();
    assert_eq!(x.len(), cols * n_blocks);
    let mut out = CVec::zeros(rows * n_blocks);
    for b in 0..n_blocks {
        let seg = q * x.rows(b * cols, cols);
        out.rows_mut(b * rows, rows).copy_from(&seg);
    }
    out
}

/// Applies `(I_N ⊗ Q)^H` to a stacked vector.
pub fn block_apply_adj(q: &CMat, x: &CVec, n_blocks: usize) -> CVec {
    let (rows, cols) = q.shape();
    assert_eq!(x.len(), rows * n_blocks);
    let qh = q.adjoint();
    let mut out = CVec::zeros(cols * n_blocks);
    for b in 0..n_blocks {
        let seg = &qh * x.rows(b * rows, rows);
        out.rows_mut(b * cols, cols).copy_from(&seg);
    }
    out
}

/// Row-block version of [`block_apply_adj`] for matrices: `(I_N ⊗ Q)^H X`.
pub fn block_apply_adj_mat(q: &CMat, x: &CMat, n_blocks: usize) -> CMat {
    let (rows, cols) = q.shape();
    assert_eq!(x.nrows(), rows * n_blocks);
    let qh = q.adjoint();
    let mut out = CMat::zeros(cols * n_blocks, x.ncols());
    for b in 0..n_blocks {
        let seg = cmul(&qh, &x.rows(b * rows, rows).into_owned());
        out.rows_mut(b * cols, cols).copy_from(&seg);
    }
    out
}

/// Row-block version of [`block_apply`] for matrices: `(I_N ⊗ Q) X`.
pub fn block_apply_mat(q: &CMat, x: &CMat, n_blocks: usize) -> CMat {
    let (rows, cols) = q.shape();
    assert_eq!(x.nrows(), cols * n_blocks);
    let mut out = CMat::zeros(rows * n_blocks, x.ncols());
    for b in 0..n_blocks {
        let seg = cmul(q, &x.rows(b * cols, cols).into_owned());
        out.rows_mut(b * rows, rows).copy_from(&seg);
    }
    out
}
