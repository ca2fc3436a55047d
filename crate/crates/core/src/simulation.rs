//! Data-generating process for the simulation study and the Monte Carlo
//! harness that summarizes repeated fits.
//!
//! Every replicate draws from its own ChaCha8 stream (`seed`, stream =
//! replicate index), so results do not depend on how replicates are
//! scheduled across threads.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Observation;
use crate::em::{fit, FitOptions, FitState};
use crate::error::{Error, Result};
use crate::inference::{alpha_covariance, cosine_test_functions, default_hn, global_beta_test};
use crate::kernel::{trapezoid_weights, uniform_grid, FunctionalCurve};
use crate::pipeline::{cumulative_hazard_at, prepare, Prepared};
use crate::stats::{ks_distance_exp1, mean, sample_sd};
use crate::tuning::{default_gamma_grid, select_gamma};

/// Number of terms in the expansions of `Z` and `β₀`.
pub const SERIES_TERMS: usize = 50;
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.3), seed_from_u64(seed), stream = replicate index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum GammaPolicy {
    /// Approximate leave-one-out selection per replicate; `grid = None` uses
    /// the default grid for the sample size.
    Select { grid: Option<Vec<f64>> },
    Fixed { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub v: u32,
    pub omega: f64,
    pub alpha0: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub exam_count: usize,
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub accelerate: bool,
    pub gamma: GammaPolicy,
    /// Compute profile-likelihood standard errors for `α̂`.
    pub standard_errors: bool,
    /// Number of cosine test functions for the global test; 0 skips it.
    pub test_fns: usize,
    pub h_n: Option<f64>,
    /// Objective-gain stopping tolerance for the constrained fits behind the
    /// profile likelihood.
    pub profile_tol: f64,
    pub level: f64,
    pub curve_points: usize,
    pub time_max: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            v: 1,
            omega: 1.0,
            alpha0: vec![1.0, -0.5],
            replicates: 200,
            seed: 20240601,
            grid_size: 101,
            exam_count: 6,
            m: 2,
            tol: 5e-3,
            max_iter: 5000,
            accelerate: true,
            gamma: GammaPolicy::Select { grid: None },
            standard_errors: true,
            test_fns: 0,
            h_n: None,
            profile_tol: 1e-7,
            level: 0.05,
            curve_points: 201,
            time_max: 5.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n < 2 {
            bad.push("n must be at least 2");
        }
        if self.replicates < 1 {
            bad.push("replicates must be at least 1");
        }
        if self.grid_size < 11 {
            bad.push("grid_size must be at least 11");
        }
        if self.exam_count < 1 {
            bad.push("exam_count must be at least 1");
        }
        if self.m < 1 {
            bad.push("m must be at least 1");
        }
        if !(self.omega >= 0.0) {
            bad.push("omega must be nonnegative");
        }
        if self.alpha0.len() != 2 {
            bad.push("alpha0 must have two entries");
        }
        if !(self.tol > 0.0) || !(self.profile_tol > 0.0) {
            bad.push("tolerances must be positive");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            bad.push("level must lie in (0, 1)");
        }
        if self.curve_points < 2 || !(self.time_max > 0.0) {
            bad.push("curve_points must be at least 2 and time_max positive");
        }
        match &self.gamma {
            GammaPolicy::Fixed { gamma } if !(*gamma > 0.0) => bad.push("fixed gamma must be positive"),
            GammaPolicy::Select { grid: Some(g) } if g.is_empty() || g.iter().any(|x| !(*x > 0.0)) => {
                bad.push("gamma grid must be nonempty and positive")
            }
            _ => {}
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// Curves and coefficient function shared by every subject of a study.
pub struct Dgp {
    pub grid: Arc<[f64]>,
    /// `ψ_j` sampled on the grid, `j = 1..=SERIES_TERMS`.
    basis: Vec<Vec<f64>>,
    /// Trapezoid weights times `β₀` on the grid.
    weighted_beta: Vec<f64>,
    decay: Vec<f64>,
    alpha0: [f64; 2],
}

/// `ψ_1 = 1`, `ψ_{j+1}(s) = √2 cos(jπs)`.
pub fn cosine_basis(j: usize, s: f64) -> f64 {
    if j == 1 {
        1.0
    } else {
        2f64.sqrt() * ((j - 1) as f64 * PI * s).cos()
    }
}

/// `β₀(s) = ω Σ_j (-1)^j j^{-3/2} ψ_j(s)`.
pub fn true_beta(omega: f64, s: f64) -> f64 {
    omega
        * (1..=SERIES_TERMS)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * (j as f64).powf(-1.5) * cosine_basis(j, s)
            })
            .sum::<f64>()
}

/// `Λ₀(t) = t²/4`.
pub fn true_cumulative_hazard(t: f64) -> f64 {
    0.25 * t * t
}

impl Dgp {
    pub fn new(cfg: &SimConfig) -> Self {
        let grid = uniform_grid(cfg.grid_size);
        let basis = (1..=SERIES_TERMS).map(|j| grid.iter().map(|&s| cosine_basis(j, s)).collect()).collect();
        let tw = trapezoid_weights(&grid);
        let weighted_beta = grid.iter().zip(&tw).map(|(&s, w)| w * true_beta(cfg.omega, s)).collect();
        let decay = (1..=SERIES_TERMS)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (j as f64).powf(-(cfg.v as f64) / 2.0)
            })
            .collect();
        Self {
            grid,
            basis,
            weighted_beta,
            decay,
            alpha0: [cfg.alpha0[0], cfg.alpha0[1]],
        }
    }

    /// `∫ β₀ Z` by the trapezoid rule on the grid.
    pub fn functional_effect(&self, z: &[f64]) -> f64 {
        self.weighted_beta.iter().zip(z).map(|(w, v)| w * v).sum()
    }
}

/// A generated subject with its latent event time and linear predictor.
#[derive(Debug, Clone)]
pub struct SimSubject {
    pub obs: Observation,
    pub t: f64,
    pub eta: f64,
}

/// `T` solving `Λ₀(T) e^η = E`.
pub fn invert_hazard(eta: f64, e: f64) -> f64 {
    2.0 * (e * (-eta).exp()).sqrt()
}

/// Examination times: sorted `Unif(0, 5)` draws plus offsets
/// `Unif(0.1(k-1), 0.1k)` at position `k`.
fn exam_times<R: Rng>(count: usize, rng: &mut R) -> Vec<f64> {
    let base = Uniform::new(0.0, 5.0);
    let mut u: Vec<f64> = (0..count).map(|_| base.sample(rng)).collect();
    u.sort_by(|a, b| a.total_cmp(b));
    for (k, x) in u.iter_mut().enumerate() {
        *x += rng.gen_range(0.1 * k as f64..0.1 * (k + 1) as f64);
    }
    u
}

pub fn gen_subject<R: Rng>(cfg: &SimConfig, dgp: &Dgp, id: String, rng: &mut R) -> Result<SimSubject> {
    let x1 = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
    let x2: f64 = rng.gen_range(0.0..1.0);
    let coef = Uniform::new(-3.0, 3.0);
    let mut z = vec![0.0; dgp.grid.len()];
    for (j, psi) in dgp.basis.iter().enumerate() {
        let a = dgp.decay[j] * coef.sample(rng);
        for (zv, p) in z.iter_mut().zip(psi) {
            *zv += a * p;
        }
    }
    let eta = dgp.alpha0[0] * x1 + dgp.alpha0[1] * x2 + dgp.functional_effect(&z);
    let e: f64 = Exp1.sample(rng);
    let t = invert_hazard(eta, e);
    let exams = exam_times(cfg.exam_count, rng);
    let left = exams.iter().cloned().filter(|&u| u < t).fold(0.0, f64::max);
    let right = exams.iter().cloned().find(|&u| u >= t).unwrap_or(f64::INFINITY);
    let curve = FunctionalCurve::new(dgp.grid.clone(), z)?;
    let obs = Observation::new(id, left, right, vec![x1, x2], curve)?;
    Ok(SimSubject { obs, t, eta })
}

pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

pub fn gen_dataset(cfg: &SimConfig, dgp: &Dgp, replicate: usize) -> Result<Vec<SimSubject>> {
    let mut rng = replicate_rng(cfg.seed, replicate);
    (0..cfg.n).map(|i| gen_subject(cfg, dgp, format!("r{replicate}-{i}"), &mut rng)).collect()
}

/// Proportions of left-, interval- and right-censored subjects.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CensoringMix {
    pub left: f64,
    pub interval: f64,
    pub right: f64,
}

impl CensoringMix {
    pub fn of(obs: &[Observation]) -> Self {
        let n = obs.len() as f64;
        let left = obs.iter().filter(|o| o.is_left_censored()).count() as f64;
        let right = obs.iter().filter(|o| o.is_right_censored()).count() as f64;
        let left = left / n;
        let right = right / n;
        Self { left, right, interval: 1.0 - left - right }
    }
}

/// Per-replicate estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub gamma: f64,
    pub converged: bool,
    pub iterations: usize,
    pub alpha: Vec<f64>,
    pub alpha_se: Option<Vec<f64>>,
    pub wald_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub rho_hat: Option<Vec<f64>>,
    pub censoring: CensoringMix,
    pub min_q_eigenvalue_ratio: f64,
    /// Largest per-iteration decrease of the penalized loglikelihood across
    /// every fit in the replicate.
    pub worst_descent: f64,
    #[serde(skip)]
    pub beta: Vec<f64>,
    #[serde(skip)]
    pub cum_hazard: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    pub se: f64,
    pub see: f64,
    pub cp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub rng: String,
    pub completed: usize,
    pub failed: usize,
    pub failure_rate: f64,
    pub params: Vec<ParamSummary>,
    pub rejection_rate: Option<f64>,
    pub censoring: CensoringMix,
    pub mean_gamma: f64,
    pub ascent_violations: usize,
    pub worst_descent: f64,
    pub min_q_eigenvalue_ratio: f64,
    pub beta_grid: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub beta_true: Vec<f64>,
    pub time_grid: Vec<f64>,
    pub cum_hazard_mean: Vec<f64>,
    pub cum_hazard_true: Vec<f64>,
    #[serde(skip)]
    pub replicates: Vec<ReplicateResult>,
}

/// Slack allowed per EM step before a decrease counts as an ascent violation.
pub const ASCENT_SLACK: f64 = 1e-8;

fn output_grid(points: usize, hi: f64) -> Vec<f64> {
    (0..points).map(|i| hi * i as f64 / (points - 1) as f64).collect()
}

/// Returns the chosen `γ`, its fit, and the worst descent over every fit made.
fn select_or_fit(cfg: &SimConfig, prep: &Prepared, opts: &FitOptions) -> Result<(f64, FitState, f64)> {
    match &cfg.gamma {
        GammaPolicy::Fixed { gamma } => {
            let st = fit(&prep.design, *gamma, opts)?;
            let worst = st.worst_descent();
            Ok((*gamma, st, worst))
        }
        GammaPolicy::Select { grid } => {
            let grid = grid.clone().unwrap_or_else(|| default_gamma_grid(cfg.n));
            let rep = select_gamma(&prep.design, &grid, opts)?;
            Ok((rep.selected, rep.selected_fit, rep.worst_descent))
        }
    }
}

/// Profile fits stop on the objective alone: the flat directions of the
/// baseline hazard make parameter changes a poor guide near the optimum.
pub fn profile_options(cfg: &SimConfig) -> FitOptions {
    FitOptions { tol: 0.0, max_iter: cfg.max_iter.max(20_000), accelerate: cfg.accelerate, pll_tol: cfg.profile_tol }
}

/// Generates, fits and summarizes one replicate.
pub fn run_replicate(cfg: &SimConfig, dgp: &Dgp, replicate: usize) -> Result<ReplicateResult> {
    let subjects = gen_dataset(cfg, dgp, replicate)?;
    let obs: Vec<Observation> = subjects.into_iter().map(|s| s.obs).collect();
    let prep = prepare(&obs, cfg.m)?;
    let opts = FitOptions { tol: cfg.tol, max_iter: cfg.max_iter, accelerate: cfg.accelerate, pll_tol: 0.0 };
    let (gamma, st, mut worst) = select_or_fit(cfg, &prep, &opts)?;
    let popts = profile_options(cfg);
    let h_n = cfg.h_n.unwrap_or_else(|| default_hn(cfg.n));
    let alpha_se = if cfg.standard_errors {
        let rep = alpha_covariance(&prep.design, gamma, &st, h_n, &popts)?;
        worst = worst.max(rep.worst_descent);
        Some(rep.se.iter().cloned().collect())
    } else {
        None
    };
    let (mut wald_statistic, mut p_value, mut rho_hat) = (None, None, None);
    if cfg.test_fns > 0 {
        let tests = cosine_test_functions(&dgp.grid, cfg.test_fns)?;
        let rep = global_beta_test(&prep.design, gamma, &st, &prep.ctx, &prep.curves, &tests, h_n, &popts)?;
        worst = worst.max(rep.worst_descent);
        let w = rep.wald.expect("global test reports a statistic");
        wald_statistic = Some(w.statistic);
        p_value = Some(w.p_value);
        rho_hat = Some(rep.rho_hat.iter().cloned().collect());
    }
    let beta = prep.beta_curve(&st.zeta, &output_grid(cfg.curve_points, 1.0))?;
    let cum_hazard = cumulative_hazard_at(prep.design.grid().points(), &st.lambda, &output_grid(cfg.curve_points, cfg.time_max));
    Ok(ReplicateResult {
        replicate,
        gamma,
        converged: st.converged,
        iterations: st.iter,
        alpha: prep.alpha(&st.zeta).iter().cloned().collect(),
        alpha_se,
        wald_statistic,
        p_value,
        rho_hat,
        censoring: CensoringMix::of(&obs),
        min_q_eigenvalue_ratio: min_eigen_ratio(&prep),
        worst_descent: worst,
        beta,
        cum_hazard,
    })
}

/// `λ_min(Q) / ‖Q‖` for the full penalty of the replicate.
fn min_eigen_ratio(prep: &Prepared) -> f64 {
    let gram = crate::kernel::compute_gram(&prep.ctx, &prep.curves).expect("curves were validated");
    let ev = gram.q.symmetric_eigenvalues();
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = gram.q.norm();
    if norm > 0.0 {
        min / norm
    } else {
        0.0
    }
}

/// Runs every replicate (in parallel on the current rayon pool) and
/// aggregates in replicate order.
pub fn run_study(cfg: &SimConfig) -> Result<SimSummary> {
    cfg.validate()?;
    let dgp = Dgp::new(cfg);
    let results: Vec<Result<ReplicateResult>> = (0..cfg.replicates).into_par_iter().map(|r| run_replicate(cfg, &dgp, r)).collect();
    let failed = results.iter().filter(|r| r.is_err()).count();
    let ok: Vec<ReplicateResult> = results.into_iter().filter_map(|r| r.ok()).collect();
    if ok.is_empty() {
        return Err(Error::AllFitsFailed);
    }
    Ok(summarize(cfg, &dgp, ok, failed))
}

pub fn summarize(cfg: &SimConfig, dgp: &Dgp, ok: Vec<ReplicateResult>, failed: usize) -> SimSummary {
    let z = 1.959963984540054;
    let params = (0..2)
        .map(|j| {
            let truth = dgp.alpha0[j];
            let est: Vec<f64> = ok.iter().map(|r| r.alpha[j]).collect();
            let ses: Vec<f64> = ok.iter().filter_map(|r| r.alpha_se.as_ref().map(|s| s[j])).filter(|s| s.is_finite()).collect();
            let covered: Vec<bool> = ok
                .iter()
                .filter_map(|r| {
                    let se = r.alpha_se.as_ref()?[j];
                    se.is_finite().then(|| (r.alpha[j] - truth).abs() <= z * se)
                })
                .collect();
            ParamSummary {
                name: format!("alpha{}", j + 1),
                truth,
                bias: mean(&est) - truth,
                se: sample_sd(&est),
                see: mean(&ses),
                cp: if covered.is_empty() {
                    f64::NAN
                } else {
                    covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64
                },
            }
        })
        .collect();
    let pvals: Vec<f64> = ok.iter().filter_map(|r| r.p_value).collect();
    let rejection_rate = (!pvals.is_empty()).then(|| pvals.iter().filter(|&&p| p < cfg.level).count() as f64 / pvals.len() as f64);
    let cm = |f: fn(&CensoringMix) -> f64| mean(&ok.iter().map(|r| f(&r.censoring)).collect::<Vec<_>>());
    let left = cm(|c| c.left);
    let right = cm(|c| c.right);
    let censoring = CensoringMix { left, right, interval: 1.0 - left - right };
    let curve_mean = |f: fn(&ReplicateResult) -> &Vec<f64>| -> Vec<f64> {
        let len = f(&ok[0]).len();
        (0..len).map(|k| mean(&ok.iter().map(|r| f(r)[k]).collect::<Vec<_>>())).collect()
    };
    let beta_grid = output_grid(cfg.curve_points, 1.0);
    let time_grid = output_grid(cfg.curve_points, cfg.time_max);
    SimSummary {
        config: cfg.clone(),
        rng: RNG_NAME.to_string(),
        completed: ok.len(),
        failed,
        failure_rate: failed as f64 / cfg.replicates as f64,
        params,
        rejection_rate,
        censoring,
        mean_gamma: mean(&ok.iter().map(|r| r.gamma).collect::<Vec<_>>()),
        ascent_violations: ok.iter().filter(|r| r.worst_descent > ASCENT_SLACK).count(),
        worst_descent: ok.iter().map(|r| r.worst_descent).fold(0.0, f64::max),
        min_q_eigenvalue_ratio: ok.iter().map(|r| r.min_q_eigenvalue_ratio).fold(f64::INFINITY, f64::min),
        beta_true: beta_grid.iter().map(|&s| true_beta(cfg.omega, s)).collect(),
        beta_mean: curve_mean(|r| &r.beta),
        beta_grid,
        cum_hazard_true: time_grid.iter().map(|&t| true_cumulative_hazard(t)).collect(),
        cum_hazard_mean: curve_mean(|r| &r.cum_hazard),
        time_grid,
        replicates: ok,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InversionCheck {
    pub ks: f64,
    pub mean: f64,
}

/// Draws `draws` subjects and compares `Λ₀(T) e^η` with Exp(1). With
/// `zero_eta` the linear predictor is forced to 0.
pub fn empirical_check_inversion(cfg: &SimConfig, draws: usize, zero_eta: bool) -> Result<InversionCheck> {
    if draws < 1000 {
        return Err(Error::Config("at least 1000 draws are required".into()));
    }
    let dgp = Dgp::new(cfg);
    let mut rng = replicate_rng(cfg.seed, usize::MAX);
    let mut out = Vec::with_capacity(draws);
    for i in 0..draws {
        let s = if zero_eta {
            let e: f64 = Exp1.sample(&mut rng);
            SimSubject {
                obs: gen_subject(cfg, &dgp, format!("k{i}"), &mut rng)?.obs,
                t: invert_hazard(0.0, e),
                eta: 0.0,
            }
        } else {
            gen_subject(cfg, &dgp, format!("k{i}"), &mut rng)?
        };
        out.push(true_cumulative_hazard(s.t) * s.eta.exp());
    }
    Ok(InversionCheck { ks: ks_distance_exp1(&out), mean: mean(&out) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(n: usize, reps: usize) -> SimConfig {
        SimConfig {
            n,
            replicates: reps,
            gamma: GammaPolicy::Fixed { gamma: 1e-3 },
            ..SimConfig::default()
        }
    }

    #[test]
    fn inversion_example() {
        assert_abs_diff_eq!(invert_hazard(0.0, 0.25), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(true_cumulative_hazard(invert_hazard(0.7, 1.3)) * 0.7f64.exp(), 1.3, epsilon = 1e-12);
    }

    #[test]
    fn zero_signal_has_no_functional_effect() {
        let cfg = SimConfig { omega: 0.0, ..small(10, 1) };
        let dgp = Dgp::new(&cfg);
        let mut rng = replicate_rng(1, 0);
        for i in 0..20 {
            let s = gen_subject(&cfg, &dgp, format!("{i}"), &mut rng).unwrap();
            assert_eq!(dgp.functional_effect(s.obs.z.values()), 0.0);
        }
    }

    #[test]
    fn cosine_basis_is_orthonormal_on_grid() {
        let grid = uniform_grid(101);
        let tw = trapezoid_weights(&grid);
        for j in 1..=10 {
            for l in 1..=10 {
                let ip: f64 = grid.iter().zip(&tw).map(|(&s, w)| w * cosine_basis(j, s) * cosine_basis(l, s)).sum();
                assert_abs_diff_eq!(ip, if j == l { 1.0 } else { 0.0 }, epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn subjects_bracket_their_event_times() {
        let cfg = small(10, 1);
        let dgp = Dgp::new(&cfg);
        let mut rng = replicate_rng(7, 3);
        for i in 0..2000 {
            let s = gen_subject(&cfg, &dgp, format!("{i}"), &mut rng).unwrap();
            assert!(s.obs.left < s.t);
            if s.obs.right.is_finite() {
                assert!(s.t <= s.obs.right);
            }
        }
        for _ in 0..1000 {
            let u = exam_times(6, &mut rng);
            assert!(u.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn inversion_check_passes() {
        let cfg = small(10, 1);
        for zero in [false, true] {
            let c = empirical_check_inversion(&cfg, 10_000, zero).unwrap();
            assert!(c.ks < 0.02, "ks {}", c.ks);
            assert!((c.mean - 1.0).abs() < 0.05);
        }
        assert!(empirical_check_inversion(&cfg, 10, false).is_err());
    }

    #[test]
    fn streams_are_distinct_per_replicate() {
        let cfg = small(5, 1);
        let dgp = Dgp::new(&cfg);
        let a = gen_dataset(&cfg, &dgp, 0).unwrap();
        let b = gen_dataset(&cfg, &dgp, 1).unwrap();
        assert_ne!(a[0].t, b[0].t);
        let a2 = gen_dataset(&cfg, &dgp, 0).unwrap();
        assert_eq!(a[0].t, a2[0].t);
    }

    #[test]
    fn config_validation_lists_problems() {
        let cfg = SimConfig { n: 1, grid_size: 5, ..SimConfig::default() };
        let Err(Error::Config(msg)) = cfg.validate() else { panic!() };
        assert!(msg.contains("n must") && msg.contains("grid_size"));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let cfg = SimConfig { standard_errors: false, ..small(40, 1) };
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(a.params[0].bias.to_bits(), b.params[0].bias.to_bits());
        assert_eq!(a.beta_mean, b.beta_mean);
        assert_abs_diff_eq!(a.censoring.left + a.censoring.interval + a.censoring.right, 1.0, epsilon = 1e-12);
    }
}
