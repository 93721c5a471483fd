//! Numerical self-checks against independent oracles: finite differences,
//! the exact Gaussian-process posterior, Monte-Carlo Bussgang statistics,
//! grid-searched phase alignment and the linear-model solvers.
//!
//! Each check returns the worst observed discrepancy so callers can apply
//! their own thresholds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimators::rotation::optimal_angle;
use crate::estimators::sbl::{
    linear_sbl, nl_sbl, LinearForward, Precision, PriorHyperparams, Problem, SblVariant,
    SolverOptions,
};
use crate::estimators::linear::initialize_u;
use crate::impairments::{bussgang_from_covariance, lna_distort, LnaParams};
use crate::linalg::{cholesky_c, CMat, CVec, RVec, C64};
use crate::onebit::{logistic_loglike, quadratic_approx};
use crate::model::{complex_gaussian, generate_channel, sigma2_from_snr_db, Dimensions, SystemModel};
use crate::sobol::{sobol_pseudo_inputs, Bounds, PseudoInputSet};
use crate::surrogate::{KernelParams, Surrogate};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub worst: f64,
    pub threshold: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.worst.is_finite() && self.worst < self.threshold
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, var: f64) -> CVec {
    CVec::from_fn(n, |_, _| complex_gaussian(rng, var))
}

fn random_pseudo(rng: &mut ChaCha8Rng, d: usize) -> PseudoInputSet {
    PseudoInputSet {
        points: CVec::from_fn(d, |_, _| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))),
        bounds: Bounds::default(),
    }
}

/// Which surrogate variant an instance exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    Base,
    OneBit,
    Hybrid,
}

fn random_surrogate(rng: &mut ChaCha8Rng, n: usize, d: usize, kind: SurrogateKind) -> Result<Surrogate> {
    let kernel = KernelParams::new(rng.gen_range(0.2..2.0), rng.gen_range(0.4..1.5))?;
    let pseudo = random_pseudo(rng, d);
    let sigma2 = rng.gen_range(0.05..1.0);
    match kind {
        SurrogateKind::Base => Surrogate::base(kernel, &pseudo, random_vec(rng, n, 1.0), sigma2),
        SurrogateKind::OneBit => {
            let c_p = RVec::from_fn(n, |_, _| rng.gen_range(0.05..0.5));
            Surrogate::one_bit(kernel, &pseudo, random_vec(rng, n, 1.0), c_p)
        }
        SurrogateKind::Hybrid => {
            // One block with a random isometry of rank n - 1 (or 1).
            let cols = n.saturating_sub(1).max(1);
            let raw = CMat::from_fn(n, cols, |_, _| complex_gaussian(rng, 1.0));
            let q = raw.qr().q();
            let y_hb = random_vec(rng, cols, 1.0);
            Surrogate::hybrid(kernel, &pseudo, &y_hb, q, sigma2)
        }
    }
}

/// Largest relative deviation between the Wirtinger Jacobian pair and
/// central differences over `instances` random problems with input length
/// in {2, 3, 4} and pseudo-input count in {3, 8}.
pub fn jacobian_fd_check(instances: usize, seed: u64, kind: SurrogateKind) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let n = 2 + i % 3;
        let d = if i % 2 == 0 { 3 } else { 8 };
        let s = random_surrogate(&mut rng, n, d, kind)?;
        let z = random_vec(&mut rng, n, 1.0);
        let jac = s.at(&z)?.jacobians();
        let out = jac.j.nrows();
        let mut fd = CMat::zeros(out, 2 * n);
        let mut an = CMat::zeros(out, 2 * n);
        for l in 0..n {
            for (k, dir) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)].into_iter().enumerate() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[l] += dir * h;
                zm[l] -= dir * h;
                let diff = (s.eval(&zp)? - s.eval(&zm)?) / C64::new(2.0 * h, 0.0);
                fd.set_column(2 * l + k, &diff);
                // d/dx = J + Jc, d/dy = i (J - Jc).
                let col = if k == 0 {
                    jac.j.column(l) + jac.j_conj.column(l)
                } else {
                    (jac.j.column(l) - jac.j_conj.column(l)) * C64::new(0.0, 1.0)
                };
                an.set_column(2 * l + k, &col);
            }
        }
        let scale = an.iter().map(|v| v.norm()).fold(1e-300, f64::max);
        let err = (fd - an).iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Largest deviation between the surrogate with pseudo-inputs placed at the
/// inputs and the exact posterior mean `z + K (K + sigma2 I)^{-1} (y - z)`.
pub fn full_gp_check(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let n = 2 + i % 15;
        let kernel = KernelParams::new(rng.gen_range(0.2..2.0), rng.gen_range(0.5..1.5))?;
        let sigma2 = rng.gen_range(0.05..1.0);
        let z = random_vec(&mut rng, n, 2.0);
        let y = random_vec(&mut rng, n, 2.0);
        let pseudo = PseudoInputSet {
            points: z.clone(),
            bounds: Bounds::default(),
        };
        let s = Surrogate::base(kernel, &pseudo, y.clone(), sigma2)?;
        let k = CMat::from_fn(n, n, |a, b| C64::new(kernel.eval(z[a], z[b]), 0.0));
        let inner = &k + CMat::identity(n, n) * C64::new(sigma2, 0.0);
        let exact = &z + &k * inner.try_inverse().expect("K + sigma2 I is invertible") * (&y - &z);
        let got = s.eval(&z)?;
        let err = (got - exact).iter().map(|v| v.norm()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Relative Frobenius errors of the closed-form Bussgang gain and distortion
/// covariance against sample estimates for a four-element input.
pub fn bussgang_mc_check(samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 4;
    let raw = CMat::from_fn(n, n, |_, _| complex_gaussian(&mut rng, 1.0));
    let mut c_z = &raw * raw.adjoint() + CMat::identity(n, n) * C64::new(0.5, 0.0);
    // Normalize to unit diagonal so the LNA gain is the same on every element.
    let dscale: Vec<f64> = (0..n).map(|j| 1.0 / c_z[(j, j)].re.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            c_z[(i, j)] *= dscale[i] * dscale[j];
        }
    }
    let power = RVec::from_element(n, 1.0);
    let lna = LnaParams::new(0.25, 1.0, &power)?;
    let (d, c_eta) = bussgang_from_covariance(&c_z, &lna)?;
    let l = cholesky_c(&c_z)?.l();

    let mut cross = CMat::zeros(n, n);
    let mut cov = CMat::zeros(n, n);
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z = &l * random_vec(&mut rng, n, 1.0);
        let g = lna_distort(&z, &lna)?;
        cross += &g * z.adjoint();
        cov += &z * z.adjoint();
        draws.push((z, g));
    }
    let d_hat = &cross * cov.try_inverse().expect("sample covariance is invertible");
    let d_true = CMat::from_diagonal(&d.map(|v| C64::new(v, 0.0)));
    let d_err = (&d_hat - &d_true).norm() / d_true.norm();

    let mut eta_cov = CMat::zeros(n, n);
    for (z, g) in &draws {
        let eta = g - &d_true * z;
        eta_cov += &eta * eta.adjoint();
    }
    eta_cov /= C64::new(samples as f64, 0.0);
    let eta_err = (&eta_cov - &c_eta).norm() / c_eta.norm();
    Ok((d_err, eta_err))
}

/// Largest gap, in grid cells, between the closed-form phase alignment and
/// a 720-point grid search, over random instances. Cases where the two
/// angles differ but the objective values agree to rounding count as zero.
pub fn rotation_grid_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = 720;
    let cell = 2.0 * PI / cells as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.gen_range(2..10);
        let k = rng.gen_range(1..n);
        let a = CMat::from_fn(n, k, |_, _| complex_gaussian(&mut rng, 1.0));
        let u = random_vec(&mut rng, k, 1.0);
        let y = random_vec(&mut rng, n, 1.0);
        let au = &a * &u;
        let objective = |t: f64| (&y - &au * C64::from_polar(1.0, t)).norm_squared();
        let theta = optimal_angle(&au, &y);
        let (grid_theta, grid_val) = (0..cells)
            .map(|i| {
                let t = i as f64 * cell;
                (t, objective(t))
            })
            .fold((0.0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        if objective(theta) > grid_val + 1e-12 {
            return f64::INFINITY;
        }
        let mut gap = (theta - grid_theta).abs();
        gap = gap.min(2.0 * PI - gap);
        worst = worst.max(gap / cell);
    }
    worst
}

/// Largest deviation between the iterates of the nonlinear solvers run on
/// linear forward models (the identity map and a zero-variance surrogate)
/// and the complex-domain linear solvers, over `instances` problems and
/// `iterations` steps each.
pub fn linear_reduction_check(instances: usize, iterations: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dimensions::new(8, 2, 5, 2)?;
    let pseudo = sobol_pseudo_inputs(20, Bounds::default())?;
    let opts = SolverOptions {
        tol: 0.0,
        max_iter: iterations,
        record_iterates: true,
        ..SolverOptions::default()
    };
    let prior = PriorHyperparams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let sigma2 = sigma2_from_snr_db(rng.gen_range(0.0..20.0));
        let sys = SystemModel::new(dims, 1.0, sigma2)?;
        let ch = generate_channel(&dims, &mut rng);
        let z = sys.clean_signal(&ch.u_vec())?;
        let y = crate::model::add_awgn(&z, sigma2, &mut rng);
        let u0 = initialize_u(&sys, &y)?;
        let precision = Precision::Scalar(1.0 / sigma2);
        let identity = LinearForward::default();
        let flat = Surrogate::base(KernelParams::new(0.0, 1.0)?, &pseudo, y.clone(), sigma2)?;
        for variant in [SblVariant::Expectation, SblVariant::Map] {
            let reference = linear_sbl(sys.a_scaled(), &y, &precision, u0.clone(), &prior, &opts, variant)?;
            for forward in [&identity as &dyn crate::estimators::ForwardModel, &flat] {
                let problem = Problem {
                    a: sys.a_scaled(),
                    target: &y,
                    precision: &precision,
                    forward,
                    combiner: None,
                };
                let nl = nl_sbl(&problem, u0.clone(), &prior, &opts, variant)?;
                if nl.iterates.len() != reference.iterates.len() {
                    return Ok(f64::INFINITY);
                }
                for (a, b) in nl.iterates.iter().zip(&reference.iterates) {
                    worst = worst.max((a - b).norm() / b.norm().max(1.0));
                }
            }
        }
    }
    Ok(worst)
}

/// Largest absolute deviation of the quadratic model's gradient and
/// curvature from central differences of the logistic log-likelihood.
pub fn quadratic_fd_check(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 2 * rng.gen_range(1..=4);
        let r = RVec::from_fn(n, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        let y = RVec::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let qa = quadratic_approx(&r, &y)?;
        let l0 = logistic_loglike(&r, &y);
        for j in 0..n {
            let at = |h: f64| {
                let mut yp = y.clone();
                yp[j] += h;
                logistic_loglike(&r, &yp)
            };
            let hg = 1e-5;
            let grad = (at(hg) - at(-hg)) / (2.0 * hg);
            let hh = 1e-3;
            let curv = -(at(hh) - 2.0 * l0 + at(-hh)) / (hh * hh);
            worst = worst
                .max((grad - qa.gradient[j]).abs())
                .max((curv - qa.curvature[j]).abs());
        }
    }
    Ok(worst)
}

/// Runs every quick check with the thresholds used by the command line.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let mut jac: f64 = 0.0;
    for (i, kind) in [SurrogateKind::Base, SurrogateKind::OneBit, SurrogateKind::Hybrid]
        .into_iter()
        .enumerate()
    {
        jac = jac.max(jacobian_fd_check(50, seed + i as u64, kind)?);
    }
    out.push(CheckReport {
        name: "surrogate Jacobians vs finite differences",
        worst: jac,
        threshold: 1e-5,
    });
    out.push(CheckReport {
        name: "surrogate vs exact GP posterior",
        worst: full_gp_check(30, seed)?,
        threshold: 1e-8,
    });
    let (d_err, eta_err) = bussgang_mc_check(200_000, seed)?;
    out.push(CheckReport {
        name: "Bussgang gain vs Monte Carlo",
        worst: d_err,
        threshold: 0.02,
    });
    out.push(CheckReport {
        name: "distortion covariance vs Monte Carlo",
        worst: eta_err,
        threshold: 0.03,
    });
    out.push(CheckReport {
        name: "phase alignment vs grid search (cells)",
        worst: rotation_grid_check(100, seed),
        threshold: 1.0 + 1e-9,
    });
    out.push(CheckReport {
        name: "nonlinear solvers on linear models vs linear solvers",
        worst: linear_reduction_check(3, 20, seed)?,
        threshold: 1e-8,
    });
    out.push(CheckReport {
        name: "1-bit quadratic model vs finite differences",
        worst: quadratic_fd_check(50, seed)?,
        threshold: 1e-6,
    });
    Ok(out)
}
