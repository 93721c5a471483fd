//! Linear baselines: least squares, Bussgang LMMSE and its 1-bit form.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::impairments::BussgangStats;
use crate::linalg::{block_apply_adj_mat, cholesky_c, cmul, cmul_adj, CMat, CVec, C64};
use crate::model::SystemModel;

/// Elements of the least-squares estimate below this modulus are zeroed
/// before the iterative solvers start.
pub const INIT_THRESHOLD: f64 = 0.5;

/// Precomputed linear estimator `u_hat = W y`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub matrix: CMat,
}

impl LinearOperator {
    pub fn apply(&self, y: &CVec) -> Result<CVec> {
        check_len(self.matrix.ncols(), y.len())?;
        Ok(&self.matrix * y)
    }
}

/// `(A^H A)^{-1} A^H`; fails when `A` is rank deficient.
pub fn least_squares_operator(a: &CMat) -> Result<LinearOperator> {
    let gram = cmul_adj(a, a);
    let chol = cholesky_c(&gram).map_err(|_| Error::RankDeficient("least-squares system matrix"))?;
    Ok(LinearOperator {
        matrix: chol.solve(&a.adjoint()),
    })
}

/// Minimum-norm least-squares operator, valid for any rank.
pub fn min_norm_operator(a: &CMat) -> Result<LinearOperator> {
    let svd = a.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-10 * a.nrows().max(a.ncols()) as f64;
    let matrix = svd
        .pseudo_inverse(tol)
        .map_err(|_| Error::RankDeficient("pseudo-inverse"))?;
    Ok(LinearOperator { matrix })
}

/// Least-squares estimate against `sqrt(p) A`.
pub fn lmmse_estimate(sys: &SystemModel, y: &CVec) -> Result<CVec> {
    least_squares_operator(sys.a_scaled())?.apply(y)
}

/// Zeroes every element with modulus below [`INIT_THRESHOLD`].
pub fn threshold_init(u_ls: &CVec) -> CVec {
    u_ls.map(|v| if v.norm() < INIT_THRESHOLD { C64::new(0.0, 0.0) } else { v })
}

/// Thresholded least-squares starting point for the iterative solvers.
pub fn initialize_u(sys: &SystemModel, y: &CVec) -> Result<CVec> {
    Ok(threshold_init(&lmmse_estimate(sys, y)?))
}

/// Observation chain seen by the Bussgang estimator.
#[derive(Debug, Clone, Copy)]
pub enum Receiver<'a> {
    Full,
    Hybrid { q: &'a CMat },
    OneBit,
}

/// Bussgang LMMSE operator `C_u A^H D C_y^{-1}` (with the combiner or the
/// arcsine-law quantizer statistics folded in when requested).
pub fn blmmse_operator(
    sys: &SystemModel,
    stats: &BussgangStats,
    receiver: Receiver<'_>,
) -> Result<LinearOperator> {
    let n = sys.dims.obs_len();
    check_len(n, stats.d.len())?;
    let d = &stats.d;
    let mut c_y = CMat::from_fn(n, n, |i, j| stats.c_z[(i, j)] * (d[i] * d[j]) + stats.c_eta[(i, j)]);
    for j in 0..n {
        c_y[(j, j)] += sys.sigma2;
    }
    // Cross-covariance E[u y^H] = C_u (sqrt(p) A)^H D.
    let mut cross = cmul(&stats.c_u, &sys.a_scaled().adjoint());
    for j in 0..n {
        let dj = d[j];
        cross.column_mut(j).scale_mut(dj);
    }
    let (cross, c_obs) = match receiver {
        Receiver::Full => (cross, c_y),
        Receiver::Hybrid { q } => {
            let blocks = sys.dims.n;
            let cross_hb = block_apply_adj_mat(q, &cross.adjoint(), blocks).adjoint();
            let c_hb = block_apply_adj_mat(q, &block_apply_adj_mat(q, &c_y, blocks).adjoint(), blocks);
            (cross_hb, c_hb)
        }
        Receiver::OneBit => {
            let gain: Vec<f64> = (0..n).map(|j| 2.0 / (PI * c_y[(j, j)].re).sqrt()).collect();
            let mut cross_r = cross;
            for (j, g) in gain.iter().enumerate() {
                cross_r.column_mut(j).scale_mut(*g);
            }
            (cross_r, arcsine_covariance(&c_y))
        }
    };
    let chol = cholesky_c(&c_obs)?;
    Ok(LinearOperator {
        matrix: chol.solve(&cross.adjoint()).adjoint(),
    })
}

/// Covariance of `sgn(Re y) + i sgn(Im y)` for circular Gaussian `y`.
pub fn arcsine_covariance(c_y: &CMat) -> CMat {
    let n = c_y.nrows();
    let scale: Vec<f64> = (0..n).map(|j| 1.0 / c_y[(j, j)].re.sqrt()).collect();
    CMat::from_fn(n, n, |i, j| {
        if i == j {
            // |r_j|^2 = 2 exactly; arcsin is too sensitive near 1 to recover it.
            return C64::new(2.0, 0.0);
        }
        let rho = c_y[(i, j)] * (scale[i] * scale[j]);
        let clamp = |v: f64| v.clamp(-1.0, 1.0);
        C64::new(clamp(rho.re).asin(), clamp(rho.im).asin()) * (4.0 / PI)
    })
}

/// `(I_N ⊗ Q)^H A` for the hybrid receiver.
pub fn combined_matrix(a: &CMat, q: &CMat, n_blocks: usize) -> CMat {
    block_apply_adj_mat(q, a, n_blocks)
}
