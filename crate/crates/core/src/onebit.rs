//! 1-bit observations: logistic likelihood, its sequential quadratic
//! approximation, and a near-maximum-likelihood probit baseline.

use crate::error::{check_len, Error, Result};
use crate::estimators::linear::{min_norm_operator, threshold_init};
use crate::estimators::sbl::{nl_sbl, EstimateResult, Precision, PriorHyperparams, Problem, SblVariant, SolverOptions};
use crate::linalg::{stack_real, unstack_real, CMat, CVec, RVec, C64};
use crate::model::SystemModel;
use crate::sobol::PseudoInputSet;
use crate::surrogate::{KernelParams, Surrogate};

/// Smallest curvature kept when the sigmoid saturates.
pub const CURVATURE_FLOOR: f64 = 1e-10;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `sum_j log sigmoid(r_j y_j)` over stacked real vectors.
pub fn logistic_loglike(r_bar: &RVec, y_bar: &RVec) -> f64 {
    assert_eq!(r_bar.len(), y_bar.len());
    r_bar.iter().zip(y_bar.iter()).map(|(r, y)| -softplus(-r * y)).sum()
}

/// Gaussian model matching the logistic log-likelihood to second order.
#[derive(Debug, Clone)]
pub struct QuadApprox {
    /// Stacked real gradient at the expansion point.
    pub gradient: RVec,
    /// Stacked real negative-Hessian diagonal, floored at [`CURVATURE_FLOOR`].
    pub curvature: RVec,
    /// Complex pseudo-observation.
    pub y_breve: CVec,
    /// Complex precision: sum of the real and imaginary curvatures.
    pub c_p: RVec,
    pub expansion_point: RVec,
}

pub fn quadratic_approx(r_bar: &RVec, y_bar_prime: &RVec) -> Result<QuadApprox> {
    check_len(r_bar.len(), y_bar_prime.len())?;
    if !r_bar.len().is_multiple_of(2) {
        return Err(Error::InvalidDimensions("stacked real vectors must have even length".into()));
    }
    if y_bar_prime.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            what: "quadratic expansion point",
        });
    }
    let n = r_bar.len();
    let gradient = RVec::from_fn(n, |j, _| r_bar[j] * sigmoid(-r_bar[j] * y_bar_prime[j]));
    let curvature = RVec::from_fn(n, |j, _| {
        let t = r_bar[j] * y_bar_prime[j];
        (sigmoid(t) * sigmoid(-t)).max(CURVATURE_FLOOR)
    });
    let breve = RVec::from_fn(n, |j, _| y_bar_prime[j] + gradient[j] / curvature[j]);
    let half = n / 2;
    let c_p = RVec::from_fn(half, |j, _| curvature[j] + curvature[j + half]);
    Ok(QuadApprox {
        gradient,
        curvature,
        y_breve: unstack_real(&breve),
        c_p,
        expansion_point: y_bar_prime.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneBitOptions {
    pub max_outer: usize,
    /// Relative change of the estimate between outer iterations.
    pub outer_tol: f64,
    pub inner: SolverOptions,
}

impl Default for OneBitOptions {
    fn default() -> Self {
        OneBitOptions {
            max_outer: 20,
            outer_tol: 1e-6,
            inner: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OneBitResult {
    pub estimate: EstimateResult,
    pub outer_iterations: usize,
    /// Inner iterations summed over all outer iterations.
    pub inner_iterations: usize,
    pub converged: bool,
}

/// Scale of the initial unquantized guess `y0 = kappa r`, chosen so that
/// `||y0||^2` matches the expected energy of the unit-power signal plus noise.
pub fn initial_scale(sigma2: f64) -> f64 {
    ((1.0 + sigma2) / 2.0).sqrt()
}

/// Rescales `u` so that `||A u||^2` equals the expected clean-signal energy.
/// Signs carry no amplitude, so without this anchor the outer iterations
/// drift in scale until the logistic curvature saturates.
fn anchor_scale(u: &CVec, a: &CMat, energy: f64) -> CVec {
    let current = (a * u).norm_squared();
    if current > 0.0 {
        u * C64::new((energy / current).sqrt(), 0.0)
    } else {
        u.clone()
    }
}

/// Sequential quadratic approximation wrapped around a nonlinear solver.
#[allow(clippy::too_many_arguments)]
pub fn onebit_estimate(
    sys: &SystemModel,
    r: &CVec,
    variant: SblVariant,
    kernel: KernelParams,
    pseudo: &PseudoInputSet,
    prior: &PriorHyperparams,
    opts: &OneBitOptions,
) -> Result<OneBitResult> {
    check_len(sys.dims.obs_len(), r.len())?;
    if r.iter().any(|v| v.re.abs() != 1.0 || v.im.abs() != 1.0) {
        return Err(Error::InvalidParameter("1-bit observations must lie in {±1±i}".into()));
    }
    let a = sys.a_scaled();
    let r_bar = stack_real(r);
    let mut y = r * C64::new(initial_scale(sys.sigma2), 0.0);
    let mut u = threshold_init(&min_norm_operator(a)?.apply(&y)?);
    let signal_energy = sys.p * r.len() as f64;
    let mut inner_iterations = 0;
    let mut last: Option<EstimateResult> = None;
    let mut converged = false;
    let mut outer = 0;

    while outer < opts.max_outer {
        let wrap = |e: Error| Error::OneBit {
            outer,
            source: Box::new(e),
        };
        let qa = quadratic_approx(&r_bar, &stack_real(&y)).map_err(wrap)?;
        let surrogate =
            Surrogate::one_bit(kernel, pseudo, qa.y_breve.clone(), qa.c_p.clone()).map_err(wrap)?;
        let precision = Precision::Diagonal(qa.c_p.clone());
        let problem = Problem {
            a,
            target: &qa.y_breve,
            precision: &precision,
            forward: &surrogate,
            combiner: None,
        };
        let est = nl_sbl(&problem, u.clone(), prior, &opts.inner, variant).map_err(wrap)?;
        inner_iterations += est.iterations;
        let u_next = anchor_scale(&est.u_hat, a, signal_energy);
        y = surrogate.eval(&(a * &u_next)).map_err(wrap)?;
        let change = (&u_next - &u).norm() / u.norm().max(1e-12);
        u = u_next;
        last = Some(est);
        outer += 1;
        if change < opts.outer_tol {
            converged = true;
            break;
        }
    }
    let estimate = last.ok_or_else(|| Error::InvalidParameter("max_outer must be at least 1".into()))?;
    Ok(OneBitResult {
        estimate,
        outer_iterations: outer,
        inner_iterations,
        converged,
    })
}

/// `log Φ(t)` for the standard normal CDF, stable for large negative `t`.
pub fn log_normal_cdf(t: f64) -> f64 {
    if t > -20.0 {
        (0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)).ln()
    } else {
        // Leading terms of the asymptotic expansion of the Mills ratio.
        let t2 = t * t;
        -0.5 * t2 - (-t).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / t2).ln()
    }
}

/// `φ(t) / Φ(t)` for the standard normal density and CDF.
pub fn normal_hazard(t: f64) -> f64 {
    if t > -20.0 {
        let pdf = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        pdf / (0.5 * libm::erfc(-t / std::f64::consts::SQRT_2))
    } else {
        let t2 = t * t;
        -t / (1.0 - 1.0 / t2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmlOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NmlOptions {
    fn default() -> Self {
        NmlOptions {
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

/// Near-maximum-likelihood estimate under the probit model: projected
/// gradient ascent on `sum log Φ(sqrt(2) r_j [A u]_j / sigma)` over the
/// ball `||u||^2 <= M K`.
pub fn nml_estimate(sys: &SystemModel, r: &CVec, opts: &NmlOptions) -> Result<(CVec, usize)> {
    check_len(sys.dims.obs_len(), r.len())?;
    if !(sys.sigma2 > 0.0) {
        return Err(Error::InvalidParameter("probit model needs sigma2 > 0".into()));
    }
    let a = sys.a_scaled();
    let scale = (2.0 / sys.sigma2).sqrt();
    let r_bar = stack_real(r);
    let n = r.len();
    // Lipschitz constant of the gradient: curvature of -log Φ is at most 1.
    let gram = a.adjoint() * a;
    // Gershgorin bound on the largest eigenvalue of A^H A.
    let spectral = (0..gram.nrows())
        .map(|i| gram.row(i).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let lipschitz = scale * scale * spectral.max(1e-12);
    let step = 1.0 / lipschitz;
    let radius = (sys.dims.channel_len() as f64).sqrt();
    let mut u = CVec::zeros(sys.dims.channel_len());
    let mut iters = 0;
    for _ in 0..opts.max_iter {
        iters += 1;
        let t = stack_real(&(a * &u));
        let g_real = RVec::from_fn(2 * n, |j, _| {
            let arg = scale * r_bar[j] * t[j];
            scale * r_bar[j] * normal_hazard(arg)
        });
        let g = unstack_real(&g_real);
        let grad = a.adjoint() * g;
        let mut next = &u + grad * C64::new(step, 0.0);
        let norm = next.norm();
        if norm > radius {
            next *= C64::new(radius / norm, 0.0);
        }
        let change = (&next - &u).norm() / u.norm().max(1e-12);
        u = next;
        if change < opts.tol {
            break;
        }
    }
    Ok((u, iters))
}

/// Probit log-likelihood of `u`, for checking the ascent.
pub fn probit_loglike(sys: &SystemModel, r: &CVec, u: &CVec) -> f64 {
    let scale = (2.0 / sys.sigma2).sqrt();
    let t = stack_real(&(sys.a_scaled() * u));
    let r_bar = stack_real(r);
    t.iter().zip(r_bar.iter()).map(|(t, r)| log_normal_cdf(scale * r * t)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglike_examples() {
        let r = RVec::from_vec(vec![1.0, -1.0, 1.0, 1.0]);
        let zero = RVec::zeros(4);
        assert!((logistic_loglike(&r, &zero) - 4.0 * 0.5f64.ln()).abs() < 1e-14);
        let far = r.map(|v| 50.0 * v);
        let ll = logistic_loglike(&r, &far);
        assert!(ll < 0.0 && ll > -4.0 * 2.0 * (-50.0f64).exp());
        for t in [-10.0f64, -3.3, -0.2, 0.0, 0.7, 4.0, 10.0] {
            let naive = (1.0 / (1.0 + (-t).exp())).ln();
            let stable = logistic_loglike(&RVec::from_element(1, 1.0), &RVec::from_element(1, t));
            assert!((naive - stable).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_example() {
        let qa = quadratic_approx(&RVec::from_vec(vec![1.0, 1.0]), &RVec::zeros(2)).unwrap();
        assert_eq!(qa.gradient[0], 0.5);
        assert_eq!(qa.curvature[0], 0.25);
        assert_eq!(qa.y_breve[0], C64::new(2.0, 2.0));
        assert_eq!(qa.c_p[0], 0.5);
    }

    #[test]
    fn saturated_curvature_is_floored() {
        let qa = quadratic_approx(&RVec::from_vec(vec![1.0, -1.0]), &RVec::from_vec(vec![1e3, -1e3])).unwrap();
        assert_eq!(qa.curvature[0], CURVATURE_FLOOR);
        assert_eq!(qa.curvature[1], CURVATURE_FLOOR);
        assert!(qa.y_breve.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    }

    #[test]
    fn quadratic_matches_finite_differences() {
        let r = RVec::from_vec(vec![1.0, -1.0, -1.0, 1.0, 1.0, -1.0]);
        let y = RVec::from_vec(vec![0.3, -1.7, 2.2, 0.05, -0.6, 4.0]);
        let qa = quadratic_approx(&r, &y).unwrap();
        let h = 1e-4;
        for j in 0..6 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            let lp = logistic_loglike(&r, &yp);
            let lm = logistic_loglike(&r, &ym);
            let l0 = logistic_loglike(&r, &y);
            let grad = (lp - lm) / (2.0 * h);
            let hess = -(lp - 2.0 * l0 + lm) / (h * h);
            assert!((grad - qa.gradient[j]).abs() < 1e-6);
            assert!((hess - qa.curvature[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn normal_cdf_helpers() {
        assert!((log_normal_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        let h = 1e-5;
        for t in [-25.0, -19.0, -5.0, 0.0, 3.0] {
            let fd = (log_normal_cdf(t + h) - log_normal_cdf(t - h)) / (2.0 * h);
            assert!((fd - normal_hazard(t)).abs() < 1e-4 * fd.abs().max(1.0), "t={t}");
        }
        // Continuity across the branch switch.
        assert!((log_normal_cdf(-20.0 + 1e-9) - log_normal_cdf(-20.0 - 1e-9)).abs() < 1e-3);
    }
}
