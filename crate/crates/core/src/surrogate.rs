//! Pseudo-input Gaussian-process surrogate of the receiver distortion.
//!
//! With cross-covariance `C` between the inputs `z` and the pseudo-inputs,
//! pseudo-input Gram matrix `G~` and noise precision `W`, the surrogate is
//!
//! ```text
//! g(z) = z + C V^{-1} C^T W (y_ref - z),   V = C^T W C + G~
//! ```
//!
//! which is algebraically the usual `m + B (B^T W B + G~^{-1})^{-1} B^T W (y - m)`
//! with `B = C G~^{-1}`, but never inverts the (often ill-conditioned) Gram
//! matrix. The hybrid variant uses `W = Q Q^H / sigma2` and returns
//! `Q^H g(z)`; the 1-bit variant uses a diagonal precision.

use nalgebra::Cholesky;
use nalgebra::Dyn;

use crate::error::{check_len, Error, Result};
use crate::linalg::{
    block_apply, block_apply_adj, block_apply_adj_mat, cholesky_r, cmul, conj_mat, join, rcmul,
    split, CMat, CVec, RMat, RVec, C64,
};
use crate::sobol::PseudoInputSet;

const JITTER_SCALE: f64 = 1e-10;
const JITTER_ESCALATIONS: usize = 2;

/// Squared-exponential kernel `tau2 exp(-rho^2 |z - z'|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub tau2: f64,
    pub rho: f64,
}

impl KernelParams {
    pub fn new(tau2: f64, rho: f64) -> Result<Self> {
        if !(tau2 >= 0.0) || !(rho >= 0.0) || !tau2.is_finite() || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel needs tau2 >= 0 and rho >= 0 (got tau2={tau2}, rho={rho})"
            )));
        }
        Ok(KernelParams { tau2, rho })
    }

    pub fn eval(&self, z: C64, zp: C64) -> f64 {
        self.tau2 * (-self.rho * self.rho * (z - zp).norm_sqr()).exp()
    }
}

/// Noise model the surrogate is conditioned under.
#[derive(Debug, Clone)]
pub enum Weighting {
    /// i.i.d. noise with the given precision `1 / sigma2`.
    Scalar(f64),
    /// Independent noise with per-element precisions.
    Diagonal(RVec),
    /// Noise observed through `(I_N ⊗ Q)^H`; `precision` is `1 / sigma2`.
    Combiner {
        q: CMat,
        n_blocks: usize,
        precision: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    kernel: KernelParams,
    pseudo: CVec,
    gram: RMat,
    weighting: Weighting,
    /// Conditioning target in input space (`Q y_hb` for the hybrid variant).
    target: CVec,
}

impl Surrogate {
    /// Surrogate conditioned on `y` under AWGN of variance `sigma2`.
    pub fn base(kernel: KernelParams, pseudo: &PseudoInputSet, y: CVec, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "surrogate needs sigma2 > 0 (got {sigma2})"
            )));
        }
        Self::build(kernel, pseudo, Weighting::Scalar(1.0 / sigma2), y)
    }

    /// Hybrid-combiner surrogate conditioned on the combined observation `y_hb`.
    pub fn hybrid(
        kernel: KernelParams,
        pseudo: &PseudoInputSet,
        y_hb: &CVec,
        q: CMat,
        sigma2: f64,
    ) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "surrogate needs sigma2 > 0 (got {sigma2})"
            )));
        }
        let m_rf = q.ncols();
        if m_rf == 0 || !y_hb.len().is_multiple_of(m_rf) {
            return Err(Error::DimensionMismatch {
                expected: m_rf,
                got: y_hb.len(),
            });
        }
        let n_blocks = y_hb.len() / m_rf;
        let target = block_apply(&q, y_hb, n_blocks);
        let weighting = Weighting::Combiner {
            q,
            n_blocks,
            precision: 1.0 / sigma2,
        };
        Self::build(kernel, pseudo, weighting, target)
    }

    /// Surrogate for a Gaussianized 1-bit model with pseudo-observation
    /// `y_breve` and per-element precision `c_p`.
    pub fn one_bit(
        kernel: KernelParams,
        pseudo: &PseudoInputSet,
        y_breve: CVec,
        c_p: RVec,
    ) -> Result<Self> {
        check_len(y_breve.len(), c_p.len())?;
        if c_p.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("1-bit precisions must be positive".into()));
        }
        Self::build(kernel, pseudo, Weighting::Diagonal(c_p), y_breve)
    }

    fn build(
        kernel: KernelParams,
        pseudo: &PseudoInputSet,
        weighting: Weighting,
        target: CVec,
    ) -> Result<Self> {
        if pseudo.is_empty() {
            return Err(Error::InvalidParameter("empty pseudo-input set".into()));
        }
        if let Weighting::Diagonal(p) = &weighting {
            check_len(target.len(), p.len())?;
        }
        let pts = pseudo.points.clone();
        let d = pts.len();
        let gram = if kernel.tau2 > 0.0 {
            jittered_gram(&kernel, &pts)?
        } else {
            RMat::zeros(d, d)
        };
        Ok(Surrogate {
            kernel,
            pseudo: pts,
            gram,
            weighting,
            target,
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn weighting(&self) -> &Weighting {
        &self.weighting
    }

    pub fn pseudo_inputs(&self) -> &CVec {
        &self.pseudo
    }

    /// Length of the surrogate output.
    pub fn out_len(&self) -> usize {
        match &self.weighting {
            Weighting::Combiner { q, n_blocks, .. } => q.ncols() * n_blocks,
            _ => self.target.len(),
        }
    }

    /// Length of the surrogate input.
    pub fn in_len(&self) -> usize {
        self.target.len()
    }

    fn is_identity(&self) -> bool {
        self.kernel.tau2 == 0.0
    }

    fn to_output(&self, x: CVec) -> CVec {
        match &self.weighting {
            Weighting::Combiner { q, n_blocks, .. } => block_apply_adj(q, &x, *n_blocks),
            _ => x,
        }
    }

    fn to_output_mat(&self, x: CMat) -> CMat {
        match &self.weighting {
            Weighting::Combiner { q, n_blocks, .. } => block_apply_adj_mat(q, &x, *n_blocks),
            _ => x,
        }
    }

    fn apply_weight(&self, x: &CVec) -> CVec {
        match &self.weighting {
            Weighting::Scalar(p) => x * C64::new(*p, 0.0),
            Weighting::Diagonal(p) => x.zip_map(p, |v, w| v * w),
            Weighting::Combiner {
                q,
                n_blocks,
                precision,
            } => block_apply(q, &block_apply_adj(q, x, *n_blocks), *n_blocks) * C64::new(*precision, 0.0),
        }
    }

    /// Per-element precisions when the weighting is diagonal.
    fn real_weights(&self) -> Option<RVec> {
        match &self.weighting {
            Weighting::Scalar(p) => Some(RVec::from_element(self.in_len(), *p)),
            Weighting::Diagonal(p) => Some(p.clone()),
            Weighting::Combiner { .. } => None,
        }
    }

    fn weight_cross(&self, c: &RMat) -> CMat {
        match &self.weighting {
            Weighting::Scalar(p) => c.map(|v| C64::new(v * p, 0.0)),
            Weighting::Diagonal(p) => {
                CMat::from_fn(c.nrows(), c.ncols(), |i, j| C64::new(c[(i, j)] * p[i], 0.0))
            }
            Weighting::Combiner {
                q,
                n_blocks,
                precision,
            } => {
                let cc = c.map(|v| C64::new(v, 0.0));
                let inner = block_apply_adj_mat(q, &cc, *n_blocks);
                crate::linalg::block_apply_mat(q, &inner, *n_blocks) * C64::new(*precision, 0.0)
            }
        }
    }

    /// Cross-covariance between `z` and the pseudo-inputs, MN x D.
    pub fn cross_covariance(&self, z: &CVec) -> RMat {
        RMat::from_fn(z.len(), self.pseudo.len(), |l, i| {
            self.kernel.eval(z[l], self.pseudo[i])
        })
    }

    /// Evaluates the surrogate at `z`.
    pub fn eval(&self, z: &CVec) -> Result<CVec> {
        Ok(self.at(z)?.value)
    }

    /// Caches everything needed for evaluation and differentiation at `z`.
    pub fn at(&self, z: &CVec) -> Result<SurrogatePoint<'_>> {
        check_len(self.in_len(), z.len())?;
        if self.is_identity() {
            return Ok(SurrogatePoint {
                model: self,
                z: z.clone(),
                value: self.to_output(z.clone()),
                cache: None,
            });
        }
        let c = self.cross_covariance(z);
        let x = self.weight_cross(&c);
        let chol = match self.real_weights() {
            // Real weights keep the whole system real.
            Some(w) => {
                let mut cw = c.clone();
                for (mut row, wl) in cw.row_iter_mut().zip(w.iter()) {
                    row.scale_mut(*wl);
                }
                let v = c.transpose() * cw + &self.gram;
                SystemFactor::Real(cholesky_r(&v).map_err(|_| Error::NotPositiveDefinite("surrogate system matrix"))?)
            }
            None => {
                let v = rcmul(&c.transpose(), &x) + self.gram.map(|g| C64::new(g, 0.0));
                let v = (&v + v.adjoint()) * C64::new(0.5, 0.0);
                SystemFactor::Complex(
                    Cholesky::new(v).ok_or(Error::NotPositiveDefinite("surrogate system matrix"))?,
                )
            }
        };
        let wr = self.apply_weight(&(&self.target - z));
        let ct = c.transpose();
        let b = rcmul(&ct, &CMat::from_column_slice(wr.len(), 1, wr.as_slice()));
        let coef = chol.solve(&b).column(0).into_owned();
        let full = z + rcmul(&c, &CMat::from_column_slice(coef.len(), 1, coef.as_slice())).column(0);
        Ok(SurrogatePoint {
            model: self,
            z: z.clone(),
            value: self.to_output(full),
            cache: Some(PointCache {
                c,
                x,
                chol,
                wr,
                coef,
            }),
        })
    }
}

fn jittered_gram(kernel: &KernelParams, pts: &CVec) -> Result<RMat> {
    let d = pts.len();
    let base = RMat::from_fn(d, d, |i, j| kernel.eval(pts[i], pts[j]));
    let mut jitter = JITTER_SCALE * kernel.tau2;
    for _ in 0..=JITTER_ESCALATIONS {
        let g = &base + RMat::identity(d, d) * jitter;
        if cholesky_r(&g).is_ok() {
            return Ok(g);
        }
        jitter *= 10.0;
    }
    Err(Error::SingularGram {
        attempts: JITTER_ESCALATIONS + 1,
    })
}

/// Cholesky factor of the surrogate system matrix `V`.
#[derive(Debug, Clone)]
enum SystemFactor {
    Real(Cholesky<f64, Dyn>),
    Complex(Cholesky<C64, Dyn>),
}

impl SystemFactor {
    fn solve(&self, b: &CMat) -> CMat {
        match self {
            SystemFactor::Real(chol) => {
                let (re, im) = split(b);
                join(&chol.solve(&re), &chol.solve(&im))
            }
            SystemFactor::Complex(chol) => chol.solve(b),
        }
    }
}

/// `C V^{-1}`, real whenever `V` is.
enum GainFactor {
    Real(RMat),
    Complex(CMat),
}

impl GainFactor {
    fn times(&self, m: &CMat) -> CMat {
        match self {
            GainFactor::Real(g) => rcmul(g, m),
            GainFactor::Complex(g) => cmul(g, m),
        }
    }
}

#[derive(Debug, Clone)]
struct PointCache {
    c: RMat,
    x: CMat,
    chol: SystemFactor,
    wr: CVec,
    coef: CVec,
}

/// Wirtinger Jacobian `dg/dz` and conjugate Jacobian `dg/dz*`.
#[derive(Debug, Clone)]
pub struct JacobianPair {
    pub j: CMat,
    pub j_conj: CMat,
}

/// Low-rank pieces of the Jacobians: `J = diag(a) + G M`, `Jc = diag(a') + G M'`.
struct Factors {
    a: CVec,
    a_conj: CVec,
    g: GainFactor,
    m: CMat,
    m_conj: CMat,
}

/// The surrogate together with cached quantities at one input point.
#[derive(Debug, Clone)]
pub struct SurrogatePoint<'a> {
    model: &'a Surrogate,
    z: CVec,
    value: CVec,
    cache: Option<PointCache>,
}

impl SurrogatePoint<'_> {
    pub fn value(&self) -> &CVec {
        &self.value
    }

    pub fn input(&self) -> &CVec {
        &self.z
    }

    fn factors(&self, cache: &PointCache) -> Factors {
        let rho2 = self.model.kernel.rho * self.model.kernel.rho;
        let pseudo = &self.model.pseudo;
        let (n, d) = cache.c.shape();
        // Row l holds dC[l, :]/dz_l.
        let dmat = CMat::from_fn(n, d, |l, i| (self.z[l] - pseudo[i]).conj() * (-rho2 * cache.c[(l, i)]));
        let coef = &cache.coef;
        let dc = &dmat * coef;
        let dbar_c = conj_mat(&dmat) * coef;
        let xc = &cache.x * coef;
        let a = dc.map(|v| v + 1.0);
        let a_conj = dbar_c;
        let v = &cache.wr - xc;
        let m = CMat::from_fn(d, n, |i, l| dmat[(l, i)] * v[l] - cache.x[(l, i)].conj() * a[l]);
        let m_conj = CMat::from_fn(d, n, |i, l| {
            dmat[(l, i)].conj() * v[l] - cache.x[(l, i)].conj() * a_conj[l]
        });
        // G = C V^{-1} = (V^{-1} C^T)^H since V is Hermitian and C is real.
        let g = match &cache.chol {
            SystemFactor::Real(chol) => GainFactor::Real(chol.solve(&cache.c.transpose()).transpose()),
            SystemFactor::Complex(chol) => {
                let ct = cache.c.transpose().map(|v| C64::new(v, 0.0));
                GainFactor::Complex(chol.solve(&ct).adjoint())
            }
        };
        Factors {
            a,
            a_conj,
            g,
            m,
            m_conj,
        }
    }

    /// Dense Jacobian pair in output space.
    pub fn jacobians(&self) -> JacobianPair {
        let n = self.z.len();
        let Some(cache) = &self.cache else {
            let eye = self.model.to_output_mat(CMat::identity(n, n));
            let zero = CMat::zeros(eye.nrows(), n);
            return JacobianPair { j: eye, j_conj: zero };
        };
        let f = self.factors(cache);
        let mut j = f.g.times(&f.m);
        let mut jc = f.g.times(&f.m_conj);
        for l in 0..n {
            j[(l, l)] += f.a[l];
            jc[(l, l)] += f.a_conj[l];
        }
        JacobianPair {
            j: self.model.to_output_mat(j),
            j_conj: self.model.to_output_mat(jc),
        }
    }

    /// `(J A, Jc A*)` in output space, without forming the dense Jacobians.
    pub fn jacobians_times(&self, a: &CMat) -> (CMat, Option<CMat>) {
        let Some(cache) = &self.cache else {
            return (self.model.to_output_mat(a.clone()), None);
        };
        let f = self.factors(cache);
        let a_conj = conj_mat(a);
        let mut xa = f.g.times(&cmul(&f.m, a));
        let mut ya = f.g.times(&cmul(&f.m_conj, &a_conj));
        for l in 0..a.nrows() {
            for c in 0..a.ncols() {
                xa[(l, c)] += f.a[l] * a[(l, c)];
                ya[(l, c)] += f.a_conj[l] * a_conj[(l, c)];
            }
        }
        (self.model.to_output_mat(xa), Some(self.model.to_output_mat(ya)))
    }
}
