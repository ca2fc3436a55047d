//! Functional Cox proportional-hazards regression for interval-censored
//! event times.
//!
//! The hazard is `λ(t) exp{αᵀX(t) + ∫ β(s) Z(s) ds}` with `β` in a Sobolev
//! space. Estimation is penalized nonparametric maximum likelihood computed
//! by an EM algorithm on Poisson-augmented data; the smoothing parameter is
//! chosen by approximate leave-one-out cross-validation, and standard errors
//! and the global test for `β` come from the penalized profile likelihood.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod em;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod linalg;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod pipeline;
pub mod simulation;
pub mod stats;
pub mod tuning;

pub use data::{build_design, build_time_grid, observed_loglik, DesignSet, Layout, Observation, TimeGrid};
pub use em::{e_step, fit, fit_from, m_step_lambda, m_step_zeta, EStepResult, FitOptions, FitState};
pub use error::{Error, Result};
pub use kernel::{compute_gram, eval_beta, integrate_curve, k1_eval, null_basis_eval, FunctionalCurve, GramMatrices, KernelContext};
pub use stats::chisq_pvalue;
pub use tuning::{aloocv_score, default_gamma_grid, select_gamma, CvReport};
pub use inference::{alpha_covariance, constrained_fit, cosine_test_functions, global_beta_test, make_alpha_constraint, make_beta_functional_constraint, profile_hessian, profile_loglik, Constraint, InferenceReport, WaldTest};
pub use pipeline::{prepare, Prepared};
pub use simulation::{empirical_check_inversion, gen_subject, run_study, GammaPolicy, SimConfig, SimSummary};
