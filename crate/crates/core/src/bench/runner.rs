//! Monte-Carlo sweep execution.
//!
//! Trial `t` at every sweep value draws from ChaCha8 seeded with the master
//! seed on stream `t`, so all sweep values see the same channel and noise
//! draws and the outcome does not depend on how trials are scheduled.

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{EstimatorKind, ExperimentConfig, ReceiverKind};
use super::table::{nmse, SweepRow, SweepTable, TrialRecord};
use crate::error::{Error, Result};
use crate::estimators::linear::combined_matrix;
use crate::estimators::{
    blmmse_operator, least_squares_operator, linear_sbl, min_norm_operator, nl_sbl,
    threshold_init, EstimateResult, LinearOperator, Precision, PriorHyperparams, Problem,
    Receiver, SblVariant, SolverOptions,
};
use crate::impairments::{
    apply_impairment, build_hybrid_combiner, bussgang_stats, channel_covariance, ImpairmentSpec,
    LnaParams,
};
use crate::linalg::{CMat, CVec, C64};
use crate::model::{generate_channel, SystemModel};
use crate::onebit::{initial_scale, nml_estimate, onebit_estimate, NmlOptions, OneBitOptions};
use crate::sobol::{sobol_pseudo_inputs, Bounds, PseudoInputSet};
use crate::surrogate::{KernelParams, Surrogate};

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "MIMO_NPE_WORKERS";

/// Stream reserved for the channel-covariance integration.
const COVARIANCE_STREAM: u64 = u64::MAX;

/// Worker count from [`WORKERS_ENV`], falling back to the logical core count.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Monte-Carlo estimate of the channel covariance used by every point with
/// `m` antennas.
pub fn covariance_for(m: usize, samples: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(COVARIANCE_STREAM);
    channel_covariance(m, samples, &mut rng)
}

/// Everything shared by the trials of one sweep value.
struct Point {
    cfg: ExperimentConfig,
    sys: SystemModel,
    spec: ImpairmentSpec,
    prior: PriorHyperparams,
    kernel: Option<KernelParams>,
    pseudo: PseudoInputSet,
    /// Measurement matrix seen by the linear estimators.
    a_eff: CMat,
    /// Least-squares operator for `a_eff` (minimum norm for the hybrid case).
    ls: LinearOperator,
    blmmse: Option<LinearOperator>,
}

impl Point {
    fn build(cfg: ExperimentConfig, c_h: &CMat) -> Result<Self> {
        let dims = cfg.dims()?;
        let sigma2 = cfg.sigma2();
        let sys = SystemModel::new(dims, cfg.p, sigma2)?;
        let lna = LnaParams::from_prior(cfg.alpha, cfg.b_off, &sys, c_h)?;
        let spec = match cfg.receiver {
            ReceiverKind::Digital => ImpairmentSpec::Lna(lna.clone()),
            ReceiverKind::OneBit => ImpairmentSpec::LnaOneBit(lna.clone()),
            ReceiverKind::Hybrid => ImpairmentSpec::LnaHybrid {
                lna: lna.clone(),
                q: build_hybrid_combiner(c_h, cfg.m_rf)?,
            },
        };
        let a_eff = match spec.combiner() {
            Some(q) => combined_matrix(sys.a_scaled(), q, dims.n),
            None => sys.a_scaled().clone(),
        };
        let ls = match cfg.receiver {
            ReceiverKind::Hybrid => min_norm_operator(&a_eff)?,
            _ => least_squares_operator(&a_eff)?,
        };
        let blmmse = if cfg.estimators.contains(&EstimatorKind::Blmmse) {
            let stats = bussgang_stats(&sys, &lna, c_h)?;
            let receiver = match &spec {
                ImpairmentSpec::LnaHybrid { q, .. } => Receiver::Hybrid { q },
                ImpairmentSpec::LnaOneBit(_) => Receiver::OneBit,
                _ => Receiver::Full,
            };
            Some(blmmse_operator(&sys, &stats, receiver)?)
        } else {
            None
        };
        let needs_kernel = cfg
            .estimators
            .iter()
            .any(|e| matches!(e, EstimatorKind::NlESbl | EstimatorKind::NlMESbl));
        let kernel = if needs_kernel { Some(cfg.kernel()?) } else { None };
        let bounds = Bounds {
            lo: -cfg.pseudo_bound,
            hi: cfg.pseudo_bound,
        };
        Ok(Point {
            prior: cfg.prior()?,
            pseudo: sobol_pseudo_inputs(cfg.pseudo_inputs, bounds)?,
            cfg,
            sys,
            spec,
            kernel,
            a_eff,
            ls,
            blmmse,
        })
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.cfg.tol,
            max_iter: self.cfg.max_iter,
            ..SolverOptions::default()
        }
    }

    fn kernel(&self) -> Result<KernelParams> {
        self.kernel
            .ok_or_else(|| Error::Config("kernel parameters were not prepared".into()))
    }
}

/// Estimate plus solver bookkeeping.
struct Outcome {
    u_hat: CVec,
    iterations: usize,
    steps: usize,
    loss_increases: usize,
}

impl Outcome {
    fn linear(u_hat: CVec) -> Self {
        Outcome {
            u_hat,
            iterations: 0,
            steps: 0,
            loss_increases: 0,
        }
    }

    fn iterative(est: &EstimateResult, iterations: usize) -> Self {
        Outcome {
            u_hat: est.u_hat.clone(),
            iterations,
            steps: est.steps.len(),
            loss_increases: est.monotonicity_violations(),
        }
    }
}

fn variant_of(e: EstimatorKind) -> SblVariant {
    match e {
        EstimatorKind::ESbl | EstimatorKind::NlESbl => SblVariant::Expectation,
        _ => SblVariant::Map,
    }
}

fn run_estimator(point: &Point, est: EstimatorKind, obs: &CVec) -> Result<Outcome> {
    let cfg = &point.cfg;
    let sigma2 = point.sys.sigma2;
    match (cfg.receiver, est) {
        (ReceiverKind::OneBit, EstimatorKind::Lmmse) => {
            let y0 = obs * C64::new(initial_scale(sigma2), 0.0);
            Ok(Outcome::linear(point.ls.apply(&y0)?))
        }
        (_, EstimatorKind::Lmmse) => Ok(Outcome::linear(point.ls.apply(obs)?)),
        (_, EstimatorKind::Blmmse) => {
            let op = point
                .blmmse
                .as_ref()
                .ok_or_else(|| Error::Config("BLMMSE operator was not prepared".into()))?;
            Ok(Outcome::linear(op.apply(obs)?))
        }
        (ReceiverKind::OneBit, EstimatorKind::NlESbl | EstimatorKind::NlMESbl) => {
            let opts = OneBitOptions {
                max_outer: cfg.max_outer,
                inner: point.solver_options(),
                ..OneBitOptions::default()
            };
            let res = onebit_estimate(
                &point.sys,
                obs,
                variant_of(est),
                point.kernel()?,
                &point.pseudo,
                &point.prior,
                &opts,
            )?;
            Ok(Outcome::iterative(&res.estimate, res.inner_iterations))
        }
        (ReceiverKind::OneBit, EstimatorKind::Nml) => {
            let opts = NmlOptions {
                max_iter: cfg.max_iter,
                tol: cfg.tol,
            };
            let (u_hat, iterations) = nml_estimate(&point.sys, obs, &opts)?;
            Ok(Outcome {
                u_hat,
                iterations,
                steps: 0,
                loss_increases: 0,
            })
        }
        (_, EstimatorKind::ESbl | EstimatorKind::MESbl) if cfg.receiver != ReceiverKind::OneBit => {
            let u0 = threshold_init(&point.ls.apply(obs)?);
            let precision = Precision::Scalar(1.0 / sigma2);
            let res = linear_sbl(
                &point.a_eff,
                obs,
                &precision,
                u0,
                &point.prior,
                &point.solver_options(),
                variant_of(est),
            )?;
            Ok(Outcome::iterative(&res, res.iterations))
        }
        (_, EstimatorKind::NlESbl | EstimatorKind::NlMESbl) => {
            let kernel = point.kernel()?;
            let u0 = threshold_init(&point.ls.apply(obs)?);
            let precision = Precision::Scalar(1.0 / sigma2);
            let n = point.sys.dims.n;
            let (surrogate, combiner) = match &point.spec {
                ImpairmentSpec::LnaHybrid { q, .. } => (
                    Surrogate::hybrid(kernel, &point.pseudo, obs, q.clone(), sigma2)?,
                    Some((q, n)),
                ),
                _ => (Surrogate::base(kernel, &point.pseudo, obs.clone(), sigma2)?, None),
            };
            let problem = Problem {
                a: point.sys.a_scaled(),
                target: obs,
                precision: &precision,
                forward: &surrogate,
                combiner,
            };
            let res = nl_sbl(&problem, u0, &point.prior, &point.solver_options(), variant_of(est))?;
            Ok(Outcome::iterative(&res, res.iterations))
        }
        (receiver, est) => Err(Error::Config(format!(
            "{est} is not available for the {receiver:?} receiver"
        ))),
    }
}

/// Draws one trial and runs every selected estimator on the same observation.
fn run_trial(point: &Point, point_idx: usize, trial: usize) -> Vec<TrialRecord> {
    let cfg = &point.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let ch = generate_channel(&point.sys.dims, &mut rng);
    let u = ch.u_vec();
    let observation = point
        .sys
        .clean_signal(&u)
        .and_then(|z| apply_impairment(&point.spec, &z, point.sys.sigma2, &mut rng));

    cfg.estimators
        .iter()
        .map(|&est| {
            let start = Instant::now();
            let outcome = observation
                .as_ref()
                .map_err(|e| Error::Config(e.to_string()))
                .and_then(|obs| run_estimator(point, est, obs))
                .and_then(|o| {
                    let score = nmse(&o.u_hat, &u)?;
                    if score.is_finite() {
                        Ok((o, score))
                    } else {
                        Err(Error::NonFinite {
                            iteration: o.iterations,
                            what: "NMSE",
                        })
                    }
                });
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok((o, score)) => TrialRecord {
                    point: point_idx,
                    trial,
                    estimator: est,
                    nmse: Some(score),
                    iterations: o.iterations,
                    wall_ms,
                    steps: o.steps,
                    loss_increases: o.loss_increases,
                    error: None,
                },
                Err(e) => TrialRecord {
                    point: point_idx,
                    trial,
                    estimator: est,
                    nmse: None,
                    iterations: 0,
                    wall_ms,
                    steps: 0,
                    loss_increases: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn metadata(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let mut meta = vec![
        ("generator".to_string(), format!("mimo-npe {}", env!("CARGO_PKG_VERSION"))),
        ("tau2_rule".to_string(), cfg.tau2_rule()),
        ("b_off".to_string(), format!("{}", cfg.b_off)),
        (
            "pseudo_inputs".to_string(),
            format!(
                "{} Sobol points on [-{b}, {b}]^2",
                cfg.pseudo_inputs,
                b = cfg.pseudo_bound
            ),
        ),
        (
            "seeding".to_string(),
            format!(
                "ChaCha8 seed {} with stream = trial index; channel covariance on stream {}",
                cfg.seed, COVARIANCE_STREAM
            ),
        ),
    ];
    let table: toml::Table = toml::from_str(&cfg.to_toml_string()).expect("config round-trips");
    for (k, v) in table {
        meta.push((format!("config.{k}"), v.to_string()));
    }
    meta
}

/// Runs the sweep with the worker count from the environment.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    run_sweep_with(cfg, workers_from_env(), |_| {})
}

/// Runs the sweep on `workers` threads; `on_point` sees the rows of each
/// sweep value as soon as it finishes.
pub fn run_sweep_with(
    cfg: &ExperimentConfig,
    workers: usize,
    mut on_point: impl FnMut(&[SweepRow]),
) -> Result<SweepTable> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut covariances: HashMap<usize, CMat> = HashMap::new();
    let mut table = SweepTable {
        metadata: metadata(cfg),
        ..SweepTable::default()
    };
    let var = cfg.sweep_var.name();
    for (idx, &value) in cfg.sweep_values.iter().enumerate() {
        let point_cfg = cfg.at(value)?;
        let c_h = covariances
            .entry(point_cfg.m)
            .or_insert_with(|| covariance_for(point_cfg.m, cfg.cov_samples, cfg.seed));
        let point = Point::build(point_cfg, c_h)?;
        let records: Vec<TrialRecord> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .flat_map_iter(|t| run_trial(&point, idx, t))
                .collect()
        });
        let first_row = table.rows.len();
        for &est in &cfg.estimators {
            let cell: Vec<&TrialRecord> = records.iter().filter(|r| r.estimator == est).collect();
            table.rows.push(SweepRow::aggregate(var, value, est, &cell));
        }
        on_point(&table.rows[first_row..]);
        table.records.extend(records);
    }
    let failed = table.records.iter().filter(|r| r.nmse.is_none()).count();
    table.metadata.push(("failed_trials".to_string(), failed.to_string()));
    Ok(table)
}
