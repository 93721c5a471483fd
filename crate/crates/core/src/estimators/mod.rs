//! Channel estimators: linear baselines, the sparse Bayesian learning
//! solvers and the phase-alignment post-processing they share.

pub mod linear;
pub mod rotation;
pub mod sbl;

pub use linear::{
    blmmse_operator, initialize_u, least_squares_operator, lmmse_estimate, min_norm_operator,
    threshold_init, LinearOperator, Receiver,
};
pub use rotation::{optimal_angle, rotation_correct};
pub use sbl::{
    has_converged, linear_e_sbl, linear_m_e_sbl, linear_sbl, nl_e_sbl, nl_m_e_sbl, nl_sbl,
    EstimateResult, ForwardModel, LinearForward, Linearization, Precision, PriorHyperparams,
    Problem, SblState, SblVariant, SolverOptions, StepRecord,
};
