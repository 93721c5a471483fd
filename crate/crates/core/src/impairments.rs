//! Receiver distortion chains and their Bussgang second-order statistics.

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg::{block_apply_adj, kron, CMat, CVec, RVec, C64};
use crate::model::{add_awgn, dft_matrix, SystemModel, ANGLE_RANGE};

/// Cubic LNA model `g_j(z) = z - a_j |z|^2 z` with `a_j = alpha / (b_off E|z_j|^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LnaParams {
    pub alpha: f64,
    pub b_off: f64,
    pub a: RVec,
}

impl LnaParams {
    /// Builds per-element gains from the average power of each element of `z`.
    pub fn new(alpha: f64, b_off: f64, signal_power: &RVec) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0 (got {alpha})")));
        }
        if !(b_off >= 1.0) || !b_off.is_finite() {
            return Err(Error::InvalidParameter(format!("b_off must be >= 1 (got {b_off})")));
        }
        if signal_power.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter(
                "signal power must be positive for every element".into(),
            ));
        }
        let a = signal_power.map(|v| alpha / (b_off * v));
        Ok(LnaParams { alpha, b_off, a })
    }

    /// Gains derived from the prior: `E|z_j|^2 = p [A C_u A^H]_jj`.
    pub fn from_prior(alpha: f64, b_off: f64, sys: &SystemModel, c_h: &CMat) -> Result<Self> {
        check_len(sys.dims.m, c_h.nrows())?;
        // diag(A ⊗ B) = diag(A) ⊗ diag(B) for the Kronecker form of C_z.
        let m = sys.dims.m;
        let power = RVec::from_fn(sys.dims.obs_len(), |j, _| {
            let pilot_energy: f64 = sys.pilots.column(j / m).iter().map(|v| v.norm_sqr()).sum();
            sys.p * pilot_energy * c_h[(j % m, j % m)].re
        });
        Self::new(alpha, b_off, &power)
    }

    pub fn identity(len: usize) -> Self {
        LnaParams {
            alpha: 0.0,
            b_off: 1.0,
            a: RVec::zeros(len),
        }
    }
}

/// Element-wise cubic distortion.
pub fn lna_distort(z: &CVec, params: &LnaParams) -> Result<CVec> {
    check_len(params.a.len(), z.len())?;
    Ok(CVec::from_fn(z.len(), |j, _| {
        let v = z[j];
        v - v * (params.a[j] * v.norm_sqr())
    }))
}

/// Monte-Carlo estimate of `E[a(θ) a(θ)^H]` over the angle support.
///
/// The result is Hermitian Toeplitz, so only the first column is averaged.
pub fn channel_covariance<R: Rng + ?Sized>(m: usize, n_samples: usize, rng: &mut R) -> CMat {
    assert!(n_samples >= 1, "need at least one sample");
    let (lo, hi) = ANGLE_RANGE;
    let mut col = vec![C64::new(0.0, 0.0); m];
    for _ in 0..n_samples {
        let s = std::f64::consts::PI * rng.gen_range(lo..=hi).sin();
        for (d, c) in col.iter_mut().enumerate() {
            *c += C64::from_polar(1.0, s * d as f64);
        }
    }
    let inv = 1.0 / n_samples as f64;
    for c in col.iter_mut() {
        *c *= inv;
    }
    col[0] = C64::new(1.0, 0.0);
    CMat::from_fn(m, m, |r, c| if r >= c { col[r - c] } else { col[c - r].conj() })
}

/// Block-diagonal angular prior covariance `I_K ⊗ F^H C_h F`.
pub fn angular_covariance(c_h: &CMat, k: usize) -> CMat {
    let f = dft_matrix(c_h.nrows());
    let block = f.adjoint() * c_h * &f;
    kron(&CMat::identity(k, k), &block)
}

/// `C_z = p A C_u A^H`, evaluated as `p (P^T P^*) ⊗ C_h`.
pub fn signal_covariance(sys: &SystemModel, c_h: &CMat) -> CMat {
    let gram = sys.pilots.transpose() * sys.pilots.map(|z| z.conj());
    kron(&gram, c_h) * C64::new(sys.p, 0.0)
}

#[derive(Debug, Clone)]
pub struct BussgangStats {
    /// Diagonal of the real Bussgang gain.
    pub d: RVec,
    pub c_eta: CMat,
    pub c_z: CMat,
    pub c_u: CMat,
    pub c_h: CMat,
}

pub fn bussgang_stats(sys: &SystemModel, params: &LnaParams, c_h: &CMat) -> Result<BussgangStats> {
    check_len(sys.dims.m, c_h.nrows())?;
    let c_z = signal_covariance(sys, c_h);
    bussgang_from_covariance(&c_z, params).map(|(d, c_eta)| BussgangStats {
        d,
        c_eta,
        c_z,
        c_u: angular_covariance(c_h, sys.dims.k),
        c_h: c_h.clone(),
    })
}

/// Bussgang gain and distortion covariance of the cubic LNA for Gaussian
/// input with covariance `c_z`.
pub fn bussgang_from_covariance(c_z: &CMat, params: &LnaParams) -> Result<(RVec, CMat)> {
    let n = c_z.nrows();
    check_len(n, params.a.len())?;
    let a = &params.a;
    let d = RVec::from_fn(n, |j, _| 1.0 - 2.0 * a[j] * c_z[(j, j)].re);
    let c_eta = CMat::from_fn(n, n, |i, j| {
        let c = c_z[(i, j)];
        c * c.norm_sqr() * (2.0 * a[i] * a[j])
    });
    Ok((d, c_eta))
}

/// `sgn(Re y) + i sgn(Im y)` with `sgn(0) = +1`.
pub fn one_bit_quantize(y: &CVec) -> CVec {
    let sgn = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
    y.map(|v| C64::new(sgn(v.re), sgn(v.im)))
}

/// Selects the `m_rf` DFT beams with the largest energy `f^H C_h f`, in
/// decreasing order. Equal energies keep ascending column order.
pub fn build_hybrid_combiner(c_h: &CMat, m_rf: usize) -> Result<CMat> {
    let m = c_h.nrows();
    if m_rf == 0 || m_rf > m {
        return Err(Error::InvalidParameter(format!(
            "RF chain count must be in 1..={m} (got {m_rf})"
        )));
    }
    let f = dft_matrix(m);
    let order = beam_order(c_h, &f);
    let mut q = CMat::zeros(m, m_rf);
    for (col, &idx) in order.iter().take(m_rf).enumerate() {
        q.set_column(col, &f.column(idx));
    }
    Ok(q)
}

/// DFT column indices sorted by decreasing beam energy.
pub fn beam_order(c_h: &CMat, f: &CMat) -> Vec<usize> {
    let m = f.ncols();
    let energies: Vec<f64> = (0..m)
        .map(|i| {
            let col = f.column(i);
            (col.adjoint() * c_h * col)[(0, 0)].re
        })
        .collect();
    let scale = energies.iter().fold(0.0f64, |acc, e| acc.max(e.abs())).max(1e-300);
    // Quantize so that energies equal up to rounding compare as ties.
    let key = |e: f64| (e / scale * 1e12).round() as i64;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(key(energies[i])), i));
    order
}

#[derive(Debug, Clone)]
pub enum ImpairmentSpec {
    Ideal,
    Lna(LnaParams),
    LnaOneBit(LnaParams),
    LnaHybrid { lna: LnaParams, q: CMat },
}

impl ImpairmentSpec {
    pub fn lna(&self) -> Option<&LnaParams> {
        match self {
            ImpairmentSpec::Ideal => None,
            ImpairmentSpec::Lna(p) | ImpairmentSpec::LnaOneBit(p) => Some(p),
            ImpairmentSpec::LnaHybrid { lna, .. } => Some(lna),
        }
    }

    pub fn combiner(&self) -> Option<&CMat> {
        match self {
            ImpairmentSpec::LnaHybrid { q, .. } => Some(q),
            _ => None,
        }
    }

    pub fn is_one_bit(&self) -> bool {
        matches!(self, ImpairmentSpec::LnaOneBit(_))
    }
}

/// Runs `z` through the distortion chain and adds noise before any
/// combining or quantization.
pub fn apply_impairment<R: Rng + ?Sized>(
    spec: &ImpairmentSpec,
    z: &CVec,
    sigma2: f64,
    rng: &mut R,
) -> Result<CVec> {
    match spec {
        ImpairmentSpec::Ideal => Ok(add_awgn(z, sigma2, rng)),
        ImpairmentSpec::Lna(p) => Ok(add_awgn(&lna_distort(z, p)?, sigma2, rng)),
        ImpairmentSpec::LnaOneBit(p) => Ok(one_bit_quantize(&add_awgn(
            &lna_distort(z, p)?,
            sigma2,
            rng,
        ))),
        ImpairmentSpec::LnaHybrid { lna, q } => {
            let m = q.nrows();
            if m == 0 || !z.len().is_multiple_of(m) {
                return Err(Error::DimensionMismatch {
                    expected: m * (z.len() / m.max(1)).max(1),
                    got: z.len(),
                });
            }
            let y = add_awgn(&lna_distort(z, lna)?, sigma2, rng);
            Ok(block_apply_adj(q, &y, z.len() / m))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_norm;
    use crate::model::{steering_vector, Dimensions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lna_scalar(a: f64) -> LnaParams {
        LnaParams {
            alpha: a,
            b_off: 1.0,
            a: RVec::from_element(1, a),
        }
    }

    #[test]
    fn lna_examples() {
        let p = lna_scalar(1.0 / 3.0);
        let out = lna_distort(&CVec::from_element(1, C64::new(1.0, 0.0)), &p).unwrap();
        assert!((out[0] - C64::new(2.0 / 3.0, 0.0)).norm() < 1e-15);
        let zero = lna_distort(&CVec::zeros(1), &p).unwrap();
        assert_eq!(zero[0], C64::new(0.0, 0.0));
        let z = CVec::from_fn(5, |i, _| C64::new(i as f64 - 2.0, 0.3 * i as f64));
        assert_eq!(lna_distort(&z, &LnaParams::identity(5)).unwrap(), z);
        assert!(lna_distort(&z, &p).is_err());
    }

    #[test]
    fn lna_gain_from_power() {
        let p = LnaParams::new(0.5, 2.0, &RVec::from_vec(vec![1.0, 4.0])).unwrap();
        assert_eq!(p.a, RVec::from_vec(vec![0.25, 0.0625]));
        let zero = LnaParams::new(0.0, 1.0, &RVec::from_vec(vec![1.0, 4.0])).unwrap();
        assert!(zero.a.iter().all(|&v| v == 0.0));
        assert!(LnaParams::new(0.5, 0.5, &RVec::from_element(1, 1.0)).is_err());
        assert!(LnaParams::new(-0.1, 1.0, &RVec::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn covariance_single_sample_is_rank_one() {
        // With one sample the estimate is a(θ) a(θ)^H for whatever θ was drawn.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = channel_covariance(6, 1, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta: f64 = rng.gen_range(ANGLE_RANGE.0..=ANGLE_RANGE.1);
        let a = steering_vector(theta, 6);
        assert!(frob_norm(&(c - &a * a.adjoint())) < 1e-12);
    }

    #[test]
    fn covariance_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = channel_covariance(8, 100_000, &mut rng);
        for j in 0..8 {
            assert_eq!(c[(j, j)], C64::new(1.0, 0.0));
        }
        let (lo, hi) = ANGLE_RANGE;
        let n = 10_000;
        let h = (hi - lo) / n as f64;
        let f = |t: f64| C64::from_polar(1.0, -std::f64::consts::PI * t.sin());
        let mut acc = (f(lo) + f(hi)) * 0.5;
        for i in 1..n {
            acc += f(lo + h * i as f64);
        }
        let quad = acc * h / (hi - lo);
        assert!((c[(0, 1)] - quad).norm() < 0.01 * quad.norm(), "{} vs {}", c[(0, 1)], quad);
        assert!(frob_norm(&(&c - c.adjoint())) < 1e-14);
    }

    #[test]
    fn bussgang_closed_forms() {
        let c_z = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        let (d, c_eta) = bussgang_from_covariance(&c_z, &lna_scalar(1.0 / 3.0)).unwrap();
        assert!((d[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c_eta[(0, 0)].re - 2.0 / 9.0).abs() < 1e-15);

        let dims = Dimensions::new(4, 2, 3, 1).unwrap();
        let sys = SystemModel::new(dims, 1.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c_h = channel_covariance(4, 1000, &mut rng);
        let stats = bussgang_stats(&sys, &LnaParams::identity(12), &c_h).unwrap();
        assert!(stats.d.iter().all(|&v| v == 1.0));
        assert_eq!(frob_norm(&stats.c_eta), 0.0);
    }

    #[test]
    fn signal_covariance_matches_dense_product() {
        let dims = Dimensions::new(4, 2, 5, 1).unwrap();
        let sys = SystemModel::new(dims, 1.7, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c_h = channel_covariance(4, 500, &mut rng);
        let c_u = angular_covariance(&c_h, 2);
        let dense = &sys.a * &c_u * sys.a.adjoint() * C64::new(1.7, 0.0);
        let fast = signal_covariance(&sys, &c_h);
        assert!(frob_norm(&(dense - &fast)) < 1e-12);
        // Scaled pilots give unit average power per element at p = 1.
        let unit = signal_covariance(&sys.with_sigma2(0.1), &c_h) / C64::new(1.7, 0.0);
        for j in 0..20 {
            assert!((unit[(j, j)].re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gains_from_prior_use_the_signal_covariance_diagonal() {
        let dims = Dimensions::new(6, 3, 7, 2).unwrap();
        let sys = SystemModel::new(dims, 2.5, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c_h = channel_covariance(6, 300, &mut rng);
        let c_z = signal_covariance(&sys, &c_h);
        let power = RVec::from_fn(c_z.nrows(), |j, _| c_z[(j, j)].re);
        let expected = LnaParams::new(0.4, 3.0, &power).unwrap();
        let got = LnaParams::from_prior(0.4, 3.0, &sys, &c_h).unwrap();
        assert!((got.a - expected.a).amax() < 1e-15);
    }

    #[test]
    fn quantizer_examples() {
        let y = CVec::from_vec(vec![C64::new(3.0, -2.0), C64::new(0.0, 0.0), C64::new(-0.1, 5.0)]);
        let r = one_bit_quantize(&y);
        assert_eq!(r[0], C64::new(1.0, -1.0));
        assert_eq!(r[1], C64::new(1.0, 1.0));
        assert_eq!(r[2], C64::new(-1.0, 1.0));
        assert_eq!(one_bit_quantize(&r), r);
    }

    #[test]
    fn combiner_full_and_tied() {
        let m = 8;
        let q = build_hybrid_combiner(&CMat::identity(m, m), m).unwrap();
        assert!(frob_norm(&(q.adjoint() * &q - CMat::identity(m, m))) < 1e-12);
        assert!(frob_norm(&(q - dft_matrix(m))) < 1e-15);
        let q3 = build_hybrid_combiner(&CMat::identity(m, m), 3).unwrap();
        assert!(frob_norm(&(q3 - dft_matrix(m).columns(0, 3))) < 1e-15);
        assert!(build_hybrid_combiner(&CMat::identity(m, m), 0).is_err());
        assert!(build_hybrid_combiner(&CMat::identity(m, m), 9).is_err());
    }

    #[test]
    fn combiner_matches_brute_force_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c_h = channel_covariance(16, 100_000, &mut rng);
        let q = build_hybrid_combiner(&c_h, 4).unwrap();
        let f = dft_matrix(16);
        let mut ranked: Vec<(f64, usize)> = (0..16)
            .map(|i| {
                let mut e = C64::new(0.0, 0.0);
                for r in 0..16 {
                    for c in 0..16 {
                        e += f[(r, i)].conj() * c_h[(r, c)] * f[(c, i)];
                    }
                }
                (e.re, i)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (col, &(_, idx)) in ranked.iter().take(4).enumerate() {
            assert!((q.column(col) - f.column(idx)).norm() < 1e-15);
        }
    }

    #[test]
    fn chain_dispatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = CVec::from_fn(8, |i, _| C64::new(0.5 - i as f64 * 0.1, 0.2 * i as f64));
        assert_eq!(apply_impairment(&ImpairmentSpec::Ideal, &z, 0.0, &mut rng).unwrap(), z);

        let q = dft_matrix(4);
        let spec = ImpairmentSpec::LnaHybrid {
            lna: LnaParams::identity(8),
            q: q.clone(),
        };
        let y = apply_impairment(&spec, &z, 0.0, &mut rng).unwrap();
        let big = kron(&CMat::identity(2, 2), &q);
        assert!((y - big.adjoint() * &z).norm() < 1e-14);

        let spec = ImpairmentSpec::LnaOneBit(LnaParams::identity(8));
        let r = apply_impairment(&spec, &z, 0.5, &mut rng).unwrap();
        assert!(r.iter().all(|v| v.re.abs() == 1.0 && v.im.abs() == 1.0));

        let bad = ImpairmentSpec::Lna(LnaParams::identity(3));
        assert!(apply_impairment(&bad, &z, 0.1, &mut rng).is_err());
    }
}
