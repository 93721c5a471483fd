//! Enhanced sparse Bayesian learning solvers.
//!
//! Each angular coefficient has a complex Gaussian prior with variance
//! `w_j s_j`, where `w` follows an inverse-gamma law with `nu` degrees of
//! freedom (giving a Student-t marginal) and `s` an inverse-gamma scale
//! prior with shape `gamma` and scale `beta`. Both solvers linearize the
//! forward model at the current iterate and solve the resulting quadratic
//! problem in stacked real coordinates `[Re u; Im u]`:
//!
//! * the expectation variant updates `w`, `s` from the posterior mean and
//!   the diagonal of the posterior covariance, then moves towards the mean;
//! * the MAP variant takes one damped Gauss-Newton step on the joint MAP
//!   objective, then updates `w`, `s` from the new iterate.
//!
//! Steps are damped by a halving line search on the penalized loss
//! `sum_j lambda_j |y_j - f_j(u)|^2 + sum_j |u_j|^2 / (w_j s_j)`.

use nalgebra::Cholesky;

use crate::error::{check_len, Error, Result};
use crate::linalg::{
    block_apply_adj, cholesky_c, cholesky_r, cmul_adj, inverse_diagonal,
    is_finite, real_rep, stack_real, unstack_real, CMat, CVec, RMat, RVec, C64,
};
use crate::surrogate::Surrogate;

use super::rotation::rotation_correct;

/// Lower bound applied to `w` and `s` so the prior precision stays finite.
pub const HYPER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorHyperparams {
    pub nu: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for PriorHyperparams {
    fn default() -> Self {
        PriorHyperparams {
            nu: 1.0,
            gamma: 1e-2,
            beta: 1e-2,
        }
    }
}

impl PriorHyperparams {
    pub fn new(nu: f64, gamma: f64, beta: f64) -> Result<Self> {
        if !(nu > 0.0 && gamma > 0.0 && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prior hyperparameters must be positive (nu={nu}, gamma={gamma}, beta={beta})"
            )));
        }
        Ok(PriorHyperparams { nu, gamma, beta })
    }

    /// Defaults used with 1-bit observations.
    pub fn one_bit() -> Self {
        PriorHyperparams {
            nu: 1.0,
            gamma: 0.5,
            beta: 0.5,
        }
    }

    /// `w_j` update given the coefficient energy and current `s_j`.
    pub fn update_w(&self, energy: f64, s: f64) -> f64 {
        ((self.nu / 2.0 + 2.0 * energy / s) / (self.nu / 2.0 + 3.0)).max(HYPER_FLOOR)
    }

    /// `s_j` update given the coefficient energy and the freshly updated `w_j`.
    pub fn update_s(&self, energy: f64, w: f64) -> f64 {
        ((self.beta + 2.0 * energy / w) / (self.gamma + 3.0)).max(HYPER_FLOOR)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative-change threshold on `u`.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest step size tried by the line search.
    pub delta_min: f64,
    /// Keep every accepted iterate in the result.
    pub record_iterates: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 500,
            delta_min: 1.0 / 1024.0,
            record_iterates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SblVariant {
    /// EM-style updates from the posterior mean and covariance diagonal.
    Expectation,
    /// Joint MAP updates with one Gauss-Newton step per iteration.
    Map,
}

/// Observation noise precision, scalar or per element.
#[derive(Debug, Clone, PartialEq)]
pub enum Precision {
    Scalar(f64),
    Diagonal(RVec),
}

impl Precision {
    pub fn at(&self, j: usize) -> f64 {
        match self {
            Precision::Scalar(v) => *v,
            Precision::Diagonal(d) => d[j],
        }
    }

    fn weighted_sq_norm(&self, r: &CVec) -> f64 {
        r.iter().enumerate().map(|(j, v)| self.at(j) * v.norm_sqr()).sum()
    }
}

/// First-order model of `f(A u)` around `u0`:
/// `f(A u) ≈ value + x (u - u0) + y (u - u0)^*`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub value: CVec,
    pub x: CMat,
    pub y: Option<CMat>,
}

/// The map from `z = A u` to the noiseless observation.
pub trait ForwardModel {
    fn evaluate(&self, z: &CVec) -> Result<CVec>;
    fn linearize(&self, z: &CVec, a: &CMat) -> Result<Linearization>;
}

/// Identity map, optionally followed by the block combiner `(I_N ⊗ Q)^H`.
#[derive(Debug, Clone, Default)]
pub struct LinearForward {
    pub combiner: Option<(CMat, usize)>,
}

impl LinearForward {
    fn out(&self, z: &CVec) -> CVec {
        match &self.combiner {
            Some((q, n)) => block_apply_adj(q, z, *n),
            None => z.clone(),
        }
    }
}

impl ForwardModel for LinearForward {
    fn evaluate(&self, z: &CVec) -> Result<CVec> {
        Ok(self.out(z))
    }

    fn linearize(&self, z: &CVec, a: &CMat) -> Result<Linearization> {
        let x = match &self.combiner {
            Some((q, n)) => crate::linalg::block_apply_adj_mat(q, a, *n),
            None => a.clone(),
        };
        Ok(Linearization {
            value: self.out(z),
            x,
            y: None,
        })
    }
}

impl ForwardModel for Surrogate {
    fn evaluate(&self, z: &CVec) -> Result<CVec> {
        self.eval(z)
    }

    fn linearize(&self, z: &CVec, a: &CMat) -> Result<Linearization> {
        let point = self.at(z)?;
        let (x, y) = point.jacobians_times(a);
        Ok(Linearization {
            value: point.value().clone(),
            x,
            y,
        })
    }
}

/// Everything a nonlinear solver run needs.
pub struct Problem<'a> {
    /// `sqrt(p) A`, mapping the angular channel to the clean signal.
    pub a: &'a CMat,
    /// Observation the residual is taken against.
    pub target: &'a CVec,
    pub precision: &'a Precision,
    pub forward: &'a dyn ForwardModel,
    /// Combiner used when aligning the final phase, if the observation is combined.
    pub combiner: Option<(&'a CMat, usize)>,
}

/// Iterate of a solver. The stacked vector `[u; u^*]` is always derived
/// from `u`, so the conjugate pairing holds by construction.
#[derive(Debug, Clone)]
pub struct SblState {
    pub u: CVec,
    pub w: RVec,
    pub s: RVec,
    pub delta: f64,
    pub iter: usize,
}

impl SblState {
    pub fn new(u0: CVec) -> Self {
        let n = u0.len();
        SblState {
            u: u0,
            w: RVec::from_element(n, 1.0),
            s: RVec::from_element(n, 1.0),
            delta: 1.0,
            iter: 0,
        }
    }

    pub fn u_tilde(&self) -> CVec {
        let n = self.u.len();
        CVec::from_fn(2 * n, |i, _| if i < n { self.u[i] } else { self.u[i - n].conj() })
    }
}

/// One line-search outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub loss_before: f64,
    pub loss_after: f64,
    pub delta: f64,
    /// The smallest step still did not decrease the loss.
    pub floor_hit: bool,
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    /// Final estimate after phase alignment.
    pub u_hat: CVec,
    pub theta_star: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized loss after each accepted step.
    pub objective_trace: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Iterates before phase alignment, when requested.
    pub iterates: Vec<CVec>,
    pub w: RVec,
    pub s: RVec,
}

impl EstimateResult {
    /// Accepted steps whose loss went up.
    pub fn monotonicity_violations(&self) -> usize {
        self.steps.iter().filter(|s| s.loss_after > s.loss_before).count()
    }

    pub fn floor_hits(&self) -> usize {
        self.steps.iter().filter(|s| s.floor_hit).count()
    }
}

/// Solution of one linearized subproblem.
struct Subproblem {
    mean: CVec,
    /// Posterior variances of the coefficients, when requested.
    variances: Option<RVec>,
}

trait Engine {
    fn solve(&mut self, u: &CVec, w: &RVec, s: &RVec, want_cov: bool) -> Result<Subproblem>;
    /// Weighted residual `sum_j lambda_j |y_j - f_j(u)|^2`.
    fn data_term(&mut self, u: &CVec) -> Result<f64>;
}

fn prior_term(u: &CVec, w: &RVec, s: &RVec) -> f64 {
    u.iter()
        .zip(w.iter().zip(s.iter()))
        .map(|(v, (w, s))| v.norm_sqr() / (w * s))
        .sum()
}

/// Linearizes the forward model and solves in real coordinates.
struct NonlinearEngine<'a, 'b> {
    problem: &'b Problem<'a>,
}

impl Engine for NonlinearEngine<'_, '_> {
    fn solve(&mut self, u: &CVec, w: &RVec, s: &RVec, want_cov: bool) -> Result<Subproblem> {
        let p = self.problem;
        let z = p.a * u;
        let lin = p.forward.linearize(&z, p.a)?;
        let r = match &lin.y {
            Some(y) => real_widely_linear(&lin.x, y),
            None => real_rep(&lin.x),
        };
        let n_obs = lin.value.len();
        check_len(p.target.len(), n_obs)?;
        let sqrt_lambda = RVec::from_fn(2 * n_obs, |i, _| p.precision.at(i % n_obs).sqrt());
        let mut r_w = r;
        for (i, sl) in sqrt_lambda.iter().enumerate() {
            r_w.row_mut(i).scale_mut(*sl);
        }
        let x0 = stack_real(u);
        let resid = stack_real(&(p.target - &lin.value));
        let mut rhs_obs = resid.component_mul(&sqrt_lambda);
        rhs_obs += &r_w * &x0;
        let rhs = r_w.tr_mul(&rhs_obs);
        let mut sys = r_w.transpose() * &r_w;
        let mk = u.len();
        for j in 0..mk {
            let inv = 1.0 / (w[j] * s[j]);
            sys[(j, j)] += inv;
            sys[(j + mk, j + mk)] += inv;
        }
        let chol = cholesky_r(&sys)?;
        let mean = unstack_real(&chol.solve(&rhs));
        let variances = want_cov.then(|| {
            let d = inverse_diagonal(&chol);
            RVec::from_fn(mk, |j, _| 0.5 * (d[j] + d[j + mk]))
        });
        Ok(Subproblem { mean, variances })
    }

    fn data_term(&mut self, u: &CVec) -> Result<f64> {
        let p = self.problem;
        let f = p.forward.evaluate(&(p.a * u))?;
        Ok(p.precision.weighted_sq_norm(&(p.target - f)))
    }
}

/// `[[Re(X+Y), -Im(X-Y)], [Im(X+Y), Re(X-Y)]]`, the real form of `u -> X u + Y u^*`.
pub fn real_widely_linear(x: &CMat, y: &CMat) -> RMat {
    let plus = x + y;
    let minus = x - y;
    let (r, c) = x.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            out[(i, j)] = plus[(i, j)].re;
            out[(i, j + c)] = -minus[(i, j)].im;
            out[(i + r, j)] = plus[(i, j)].im;
            out[(i + r, j + c)] = minus[(i, j)].re;
        }
    }
    out
}

/// Complex-domain solver for a fixed linear model `y = A u + e`.
struct LinearEngine<'a> {
    a: &'a CMat,
    target: &'a CVec,
    precision: &'a Precision,
    gram: CMat,
    proj: CVec,
}

impl<'a> LinearEngine<'a> {
    fn new(a: &'a CMat, target: &'a CVec, precision: &'a Precision) -> Result<Self> {
        check_len(a.nrows(), target.len())?;
        let lambda = CVec::from_fn(a.nrows(), |j, _| C64::new(precision.at(j), 0.0));
        let mut weighted = a.clone();
        for (j, l) in lambda.iter().enumerate() {
            weighted.row_mut(j).scale_mut(l.re);
        }
        let gram = cmul_adj(a, &weighted);
        let proj = weighted.adjoint() * target;
        Ok(LinearEngine {
            a,
            target,
            precision,
            gram,
            proj,
        })
    }
}

impl Engine for LinearEngine<'_> {
    fn solve(&mut self, u: &CVec, w: &RVec, s: &RVec, want_cov: bool) -> Result<Subproblem> {
        let mut sys = self.gram.clone();
        for j in 0..u.len() {
            sys[(j, j)] += C64::new(1.0 / (w[j] * s[j]), 0.0);
        }
        let chol = cholesky_c(&sys)?;
        let mean = chol.solve(&self.proj);
        let variances = want_cov.then(|| complex_inverse_diagonal(&chol));
        Ok(Subproblem { mean, variances })
    }

    fn data_term(&mut self, u: &CVec) -> Result<f64> {
        Ok(self.precision.weighted_sq_norm(&(self.target - self.a * u)))
    }
}

fn complex_inverse_diagonal(chol: &Cholesky<C64, nalgebra::Dyn>) -> RVec {
    let l = chol.l();
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&CMat::identity(n, n))
        .expect("Cholesky factor has a nonzero diagonal");
    RVec::from_fn(n, |j, _| linv.column(j).norm_squared())
}

/// Final state, convergence flag, loss trace, step records and iterates.
type DriveOutput = (SblState, bool, Vec<f64>, Vec<StepRecord>, Vec<CVec>);

fn drive(
    engine: &mut dyn Engine,
    u0: CVec,
    prior: &PriorHyperparams,
    opts: &SolverOptions,
    variant: SblVariant,
) -> Result<DriveOutput> {
    let mut state = SblState::new(u0);
    let mut data_u = engine.data_term(&state.u)?;
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut iterates = Vec::new();
    let mut converged = false;
    let mk = state.u.len();

    while state.iter < opts.max_iter {
        let want_cov = variant == SblVariant::Expectation;
        let sub = engine.solve(&state.u, &state.w, &state.s, want_cov)?;
        if !is_finite(&sub.mean) {
            return Err(Error::NonFinite {
                iteration: state.iter,
                what: "linearized posterior mean",
            });
        }

        // Weights the line search is run under.
        let (w_ls, s_ls) = match (&sub.variances, variant) {
            (Some(var), SblVariant::Expectation) => {
                let mut w = state.w.clone();
                let mut s = state.s.clone();
                for j in 0..mk {
                    let energy = sub.mean[j].norm_sqr() + var[j];
                    w[j] = prior.update_w(energy, state.s[j]);
                    s[j] = prior.update_s(energy, w[j]);
                }
                (w, s)
            }
            _ => (state.w.clone(), state.s.clone()),
        };

        let loss_before = data_u + prior_term(&state.u, &w_ls, &s_ls);
        let mut delta = 1.0;
        let mut best: (f64, CVec, f64) = (loss_before, state.u.clone(), data_u);
        let mut floor_hit = false;
        let accepted = loop {
            let cand = &sub.mean * C64::new(delta, 0.0) + &state.u * C64::new(1.0 - delta, 0.0);
            let data_c = engine.data_term(&cand)?;
            let loss_c = data_c + prior_term(&cand, &w_ls, &s_ls);
            if loss_c < loss_before {
                break (loss_c, cand, data_c);
            }
            if loss_c < best.0 {
                best = (loss_c, cand, data_c);
            }
            if delta <= opts.delta_min {
                floor_hit = true;
                break best;
            }
            delta *= 0.5;
        };
        let (loss_after, u_new, data_new) = accepted;
        steps.push(StepRecord {
            loss_before,
            loss_after,
            delta,
            floor_hit,
        });
        trace.push(loss_after);

        match variant {
            SblVariant::Expectation => {
                state.w = w_ls;
                state.s = s_ls;
            }
            SblVariant::Map => {
                for j in 0..mk {
                    let energy = u_new[j].norm_sqr();
                    state.w[j] = prior.update_w(energy, state.s[j]);
                    state.s[j] = prior.update_s(energy, state.w[j]);
                }
            }
        }

        let change = (&u_new - &state.u).norm() / state.u.norm().max(1e-12);
        state.u = u_new;
        state.delta = delta;
        state.iter += 1;
        data_u = data_new;
        if opts.record_iterates {
            iterates.push(state.u.clone());
        }
        if !is_finite(&state.u) {
            return Err(Error::NonFinite {
                iteration: state.iter,
                what: "accepted iterate",
            });
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok((state, converged, trace, steps, iterates))
}

fn finish(
    state: SblState,
    converged: bool,
    trace: Vec<f64>,
    steps: Vec<StepRecord>,
    iterates: Vec<CVec>,
    a_u: CVec,
    target: &CVec,
) -> EstimateResult {
    let (u_hat, theta_star) = rotation_correct(&state.u, &a_u, target);
    EstimateResult {
        u_hat,
        theta_star,
        iterations: state.iter,
        converged,
        objective_trace: trace,
        steps,
        iterates,
        w: state.w,
        s: state.s,
    }
}

/// Nonlinear solver over an arbitrary forward model.
pub fn nl_sbl(
    problem: &Problem<'_>,
    u0: CVec,
    prior: &PriorHyperparams,
    opts: &SolverOptions,
    variant: SblVariant,
) -> Result<EstimateResult> {
    check_len(problem.a.ncols(), u0.len())?;
    let mut engine = NonlinearEngine { problem };
    let (state, converged, trace, steps, iterates) = drive(&mut engine, u0, prior, opts, variant)?;
    let z = problem.a * &state.u;
    let a_u = match problem.combiner {
        Some((q, n)) => block_apply_adj(q, &z, n),
        None => z,
    };
    Ok(finish(state, converged, trace, steps, iterates, a_u, problem.target))
}

pub fn nl_e_sbl(
    problem: &Problem<'_>,
    u0: CVec,
    prior: &PriorHyperparams,
    opts: &SolverOptions,
) -> Result<EstimateResult> {
    nl_sbl(problem, u0, prior, opts, SblVariant::Expectation)
}

pub fn nl_m_e_sbl(
    problem: &Problem<'_>,
    u0: CVec,
    prior: &PriorHyperparams,
    opts: &SolverOptions,
) -> Result<EstimateResult> {
    nl_sbl(problem, u0, prior, opts, SblVariant::Map)
}

/// Linear-model solver working directly with the complex normal equations.
pub fn linear_sbl(
    a: &CMat,
    target: &CVec,
    precision: &Precision,
    u0: CVec,
    prior: &PriorHyperparams,
    opts: &SolverOptions,
    variant: SblVariant,
) -> Result<EstimateResult> {
    check_len(a.ncols(), u0.len())?;
    let mut engine = LinearEngine::new(a, target, precision)?;
    let (state, converged, trace, steps, iterates) = drive(&mut engine, u0, prior, opts, variant)?;
    let a_u = a * &state.u;
    Ok(finish(state, converged, trace, steps, iterates, a_u, target))
}

pub fn linear_e_sbl(
    a: &CMat,
    y: &CVec,
    precision: &Precision,
    u0: CVec,
    prior: &PriorHyperparams,
    opts: &SolverOptions,
) -> Result<EstimateResult> {
    linear_sbl(a, y, precision, u0, prior, opts, SblVariant::Expectation)
}

pub fn linear_m_e_sbl(
    a: &CMat,
    y: &CVec,
    precision: &Precision,
    u0: CVec,
    prior: &PriorHyperparams,
    opts: &SolverOptions,
) -> Result<EstimateResult> {
    linear_sbl(a, y, precision, u0, prior, opts, SblVariant::Map)
}

/// Relative-change stopping rule shared by the solvers.
pub fn has_converged(prev: &CVec, next: &CVec, tol: f64) -> bool {
    (next - prev).norm() / prev.norm().max(1e-12) < tol
}
