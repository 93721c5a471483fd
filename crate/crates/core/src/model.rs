//! System model: ULA multipath channels, Zadoff-Chu pilots and the
//! vectorized linear map `z = sqrt(p) (P^T ⊗ F) u`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::linalg::{kron, CMat, CVec, C64};

/// Angle-of-arrival support of the multipath model, in radians.
pub const ANGLE_RANGE: (f64, f64) = (PI / 4.0, 3.0 * PI / 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    /// Antennas at the base station.
    pub m: usize,
    /// Single-antenna users.
    pub k: usize,
    /// Pilot length.
    pub n: usize,
    /// Propagation paths per user.
    pub l: usize,
}

impl Dimensions {
    pub fn new(m: usize, k: usize, n: usize, l: usize) -> Result<Self> {
        let dims = Dimensions { m, k, n, l };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n == 0 || self.l == 0 {
            return Err(Error::InvalidDimensions(format!(
                "M, K, N, L must all be at least 1 (got {self:?})"
            )));
        }
        if self.n < self.k {
            return Err(Error::InvalidDimensions(format!(
                "pilot length N={} is shorter than user count K={}",
                self.n, self.k
            )));
        }
        Ok(())
    }

    /// Length of the observation vector, `M N`.
    pub fn obs_len(&self) -> usize {
        self.m * self.n
    }

    /// Length of the vectorized angular channel, `M K`.
    pub fn channel_len(&self) -> usize {
        self.m * self.k
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Antenna-domain channel, M x K.
    pub h: CMat,
    /// Angular-domain channel `F^H H`, M x K.
    pub u: CMat,
    /// Angles of arrival, K x L.
    pub angles: nalgebra::DMatrix<f64>,
    /// Complex path gains, K x L.
    pub gains: CMat,
}

impl ChannelRealization {
    /// `vec(U)`, column-major.
    pub fn u_vec(&self) -> CVec {
        CVec::from_column_slice(self.u.as_slice())
    }
}

/// ULA steering vector with half-wavelength spacing: `[a]_m = exp(i π m sin θ)`.
pub fn steering_vector(theta: f64, m: usize) -> CVec {
    let phase = PI * theta.sin();
    CVec::from_fn(m, |i, _| C64::from_polar(1.0, phase * i as f64))
}

/// Unitary M-point DFT matrix.
pub fn dft_matrix(m: usize) -> CMat {
    let scale = 1.0 / (m as f64).sqrt();
    CMat::from_fn(m, m, |r, c| {
        let angle = -2.0 * PI * ((r * c) % m) as f64 / m as f64;
        C64::from_polar(scale, angle)
    })
}

/// Draws a multipath channel with uniform angles on [`ANGLE_RANGE`] and
/// standard complex Gaussian path gains.
pub fn generate_channel<R: Rng + ?Sized>(dims: &Dimensions, rng: &mut R) -> ChannelRealization {
    let (lo, hi) = ANGLE_RANGE;
    let angles = nalgebra::DMatrix::from_fn(dims.k, dims.l, |_, _| rng.gen_range(lo..=hi));
    let gains = CMat::from_fn(dims.k, dims.l, |_, _| complex_gaussian(rng, 1.0));
    channel_from_paths(dims, angles, gains)
}

/// Builds a channel from explicit path angles and gains (both K x L).
pub fn channel_from_paths(
    dims: &Dimensions,
    angles: nalgebra::DMatrix<f64>,
    gains: CMat,
) -> ChannelRealization {
    let norm = (1.0 / dims.l as f64).sqrt();
    let mut h = CMat::zeros(dims.m, dims.k);
    for k in 0..dims.k {
        for l in 0..dims.l {
            let a = steering_vector(angles[(k, l)], dims.m);
            let g = gains[(k, l)] * norm;
            for m in 0..dims.m {
                h[(m, k)] += g * a[m];
            }
        }
    }
    let f = dft_matrix(dims.m);
    let u = f.adjoint() * &h;
    ChannelRealization {
        h,
        u,
        angles,
        gains,
    }
}

/// One CN(0, var) sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// K x N pilot matrix from cyclic shifts of one odd-length Zadoff-Chu root
/// sequence. Row k is the root sequence shifted by `k * floor(N / K)`.
pub fn zadoff_chu_pilots(k: usize, n: usize) -> Result<CMat> {
    zadoff_chu_pilots_with_root(k, n, 1)
}

pub fn zadoff_chu_pilots_with_root(k: usize, n: usize, root: usize) -> Result<CMat> {
    if k == 0 || n < k {
        return Err(Error::InvalidDimensions(format!(
            "Zadoff-Chu pilots need 1 <= K <= N (got K={k}, N={n})"
        )));
    }
    if n.is_multiple_of(2) {
        return Err(Error::InvalidDimensions(format!(
            "Zadoff-Chu pilot length must be odd (got N={n})"
        )));
    }
    if root == 0 || gcd(root, n) != 1 {
        return Err(Error::InvalidParameter(format!(
            "Zadoff-Chu root {root} is not coprime with N={n}"
        )));
    }
    let root_seq: Vec<C64> = (0..n)
        .map(|i| {
            // q n (n+1) mod 2N keeps the phase argument small and exact.
            let e = (root * i * (i + 1)) % (2 * n);
            C64::from_polar(1.0, -PI * e as f64 / n as f64)
        })
        .collect();
    let stride = n / k;
    Ok(CMat::from_fn(k, n, |row, col| root_seq[(col + row * stride) % n]))
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub dims: Dimensions,
    /// Pilot matrix, K x N. Rows have squared norm N / K so that every
    /// element of `z` has unit average power under the channel prior.
    pub pilots: CMat,
    /// Unitary DFT, M x M.
    pub dft: CMat,
    /// `P^T ⊗ F`, MN x MK.
    pub a: CMat,
    /// Transmit power (linear).
    pub p: f64,
    /// AWGN variance.
    pub sigma2: f64,
    a_scaled: CMat,
}

impl SystemModel {
    /// Builds the system with root-1 Zadoff-Chu pilots scaled by `1/sqrt(K)`.
    pub fn new(dims: Dimensions, p: f64, sigma2: f64) -> Result<Self> {
        dims.validate()?;
        let zc = zadoff_chu_pilots(dims.k, dims.n)?;
        let pilots = zc / C64::new((dims.k as f64).sqrt(), 0.0);
        Self::with_pilots(dims, pilots, p, sigma2)
    }

    pub fn with_pilots(dims: Dimensions, pilots: CMat, p: f64, sigma2: f64) -> Result<Self> {
        dims.validate()?;
        if pilots.shape() != (dims.k, dims.n) {
            return Err(Error::InvalidDimensions(format!(
                "pilot matrix is {:?}, expected ({}, {})",
                pilots.shape(),
                dims.k,
                dims.n
            )));
        }
        if !(p > 0.0) || !(sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need p > 0 and sigma2 >= 0 (got p={p}, sigma2={sigma2})"
            )));
        }
        let dft = dft_matrix(dims.m);
        let a = kron(&pilots.transpose(), &dft);
        let a_scaled = &a * C64::new(p.sqrt(), 0.0);
        Ok(SystemModel {
            dims,
            pilots,
            dft,
            a,
            p,
            sigma2,
            a_scaled,
        })
    }

    /// Same system with a different noise level.
    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        SystemModel {
            sigma2,
            ..self.clone()
        }
    }

    /// `sqrt(p) A`, the matrix the estimators actually invert.
    pub fn a_scaled(&self) -> &CMat {
        &self.a_scaled
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.p / self.sigma2).log10()
    }

    /// `z = sqrt(p) A u`.
    pub fn clean_signal(&self, u: &CVec) -> Result<CVec> {
        check_len(self.dims.channel_len(), u.len())?;
        Ok(&self.a_scaled * u)
    }
}

/// Noise variance for a per-antenna SNR in dB at unit transmit power.
pub fn sigma2_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Adds i.i.d. CN(0, sigma2) noise.
pub fn add_awgn<R: Rng + ?Sized>(z: &CVec, sigma2: f64, rng: &mut R) -> CVec {
    if sigma2 == 0.0 {
        return z.clone();
    }
    z.map(|v| v + complex_gaussian(rng, sigma2))
}
