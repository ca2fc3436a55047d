//! Test oracles: a direct quasi-Newton maximizer of the penalized observed
//! loglikelihood over `(ζ, log λ)`, its linearly constrained variant, and
//! exact leave-one-out refits.
//!
//! The likelihood and its gradient are coded here from the interval
//! probabilities alone, without the Poisson augmentation the EM relies on.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::condition::ArmijoCondition;
use argmin::solver::linesearch::{BacktrackingLineSearch, MoreThuenteLineSearch};
use argmin::solver::quasinewton::BFGS;
use nalgebra::{DMatrix, DVector};

use crate::data::DesignSet;
use crate::em::{fit_from, FitOptions, FitState};
use crate::error::{Error, Result};
use crate::tuning::capped_subject_loglik;

/// Per-subject observed loglikelihoods and, optionally, the gradient of
/// their mean with respect to `(ζ, log λ)`.
fn loglik_and_grad(design: &DesignSet, zeta: &DVector<f64>, lambda: &[f64], want_grad: bool) -> (Vec<f64>, Option<(DVector<f64>, Vec<f64>)>) {
    let (n, q, dim) = (design.n(), design.q(), design.dim());
    let pts = &design.grid().points()[1..];
    let mut ll = Vec::with_capacity(n);
    let mut gz = DVector::zeros(dim);
    let mut gu = vec![0.0; q];
    for i in 0..n {
        let (l, r) = (design.left()[i], design.right()[i]);
        let lo = pts.iter().filter(|&&t| t <= l).count();
        let hi = r.is_finite().then(|| pts.iter().filter(|&&t| t <= r).count());
        // The exponent cap keeps far-off trial points finite; it is never
        // active near a maximizer.
        let mu: Vec<f64> = (0..hi.unwrap_or(lo)).map(|k| (lambda[k].ln() + design.row(i, k).dot(zeta)).min(300.0).exp()).collect();
        let hl: f64 = mu[..lo].iter().sum();
        // `l_i = -H_L + log(1 - e^{-D})` with `D` the mass inside the
        // interval. `D` is floored so trial points far outside the domain
        // give a large finite cost instead of an infinite one.
        let (v, b) = match hi {
            None => (-hl, 0.0),
            Some(_) => {
                let d = mu[lo..].iter().sum::<f64>().max(1e-200);
                (-hl + (-(-d).exp_m1()).ln(), 1.0 / d.exp_m1())
            }
        };
        ll.push(v);
        if want_grad {
            for (k, &m) in mu.iter().enumerate() {
                let w = if k < lo { -m } else { b * m };
                gz.axpy(w, &design.row(i, k), 1.0);
                gu[k] += w;
            }
        }
    }
    let nf = n as f64;
    let grad = want_grad.then(|| (gz / nf, gu.into_iter().map(|g| g / nf).collect()));
    (ll, grad)
}

/// `n⁻¹ Σ_i l_i(ζ, λ) - γ ζᵀQ̃ζ` computed directly from interval probabilities.
pub fn direct_penalized_loglik(design: &DesignSet, gamma: f64, zeta: &DVector<f64>, lambda: &[f64]) -> f64 {
    let (ll, _) = loglik_and_grad(design, zeta, lambda, false);
    ll.iter().sum::<f64>() / design.n() as f64 - gamma * zeta.dot(&(design.penalty() * zeta))
}

/// Negative penalized loglikelihood in `x = (v, log λ)` with `ζ = z0 + N v`.
/// Columns of `basis` rescaled so that every coordinate moves the linear
/// predictor by at most one unit per unit step.
fn balanced(design: &DesignSet, mut basis: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..basis.ncols() {
        let col = basis.column(j).clone_owned();
        let mut reach: f64 = 0.0;
        for i in 0..design.n() {
            for k in 0..design.q() {
                reach = reach.max(design.row(i, k).dot(&col).abs());
            }
        }
        if reach > 0.0 {
            basis.column_mut(j).unscale_mut(reach);
        }
    }
    basis
}

struct Problem<'a> {
    design: &'a DesignSet,
    gamma: f64,
    z0: DVector<f64>,
    basis: DMatrix<f64>,
}

impl Problem<'_> {
    fn split(&self, x: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let k = self.basis.ncols();
        let v = DVector::from_column_slice(&x[..k]);
        let zeta = &self.z0 + &self.basis * v;
        let lambda = x[k..].iter().map(|u| u.exp()).collect();
        (zeta, lambda)
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        // A search direction poisoned by a degenerate quasi-Newton update
        // would otherwise keep the line search shrinking forever.
        if x.iter().any(|v| !v.is_finite()) {
            return Err(argmin::core::Error::msg("non-finite parameter"));
        }
        let (zeta, lambda) = self.split(x);
        let v = -direct_penalized_loglik(self.design, self.gamma, &zeta, &lambda);
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    }
}

impl Gradient for Problem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let (zeta, lambda) = self.split(x);
        let (_, g) = loglik_and_grad(self.design, &zeta, &lambda, true);
        let (gz, gu) = g.expect("requested");
        let gz = gz - self.design.penalty() * &zeta * (2.0 * self.gamma);
        let gv = self.basis.transpose() * gz;
        let g: Vec<f64> = gv.iter().chain(gu.iter()).map(|g| -g).collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(argmin::core::Error::msg("non-finite gradient"));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone)]
pub struct OracleFit {
    pub zeta: DVector<f64>,
    pub lambda: Vec<f64>,
    pub pll: f64,
}

/// One BFGS run from `x` with initial inverse Hessian `h0 I`. The
/// Moré-Thuente search needs finite values along the whole bracket; the
/// backtracking variant only shrinks, so it survives steps that leave the
/// domain.
fn bfgs_once(problem: &Problem<'_>, x: &[f64], h0: f64, backtracking: bool) -> Option<(f64, Vec<f64>)> {
    let dim = x.len();
    let eye: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| if i == j { h0 } else { 0.0 }).collect()).collect();
    macro_rules! run {
        ($ls:expr) => {{
            let solver = BFGS::new($ls).with_tolerance_grad(1e-12).ok()?.with_tolerance_cost(0.0).ok()?;
            let res = Executor::new(problem, solver).configure(|s| s.param(x.to_vec()).inv_hessian(eye).max_iters(CHUNK)).run().ok()?;
            let state = res.state();
            Some((state.get_best_cost(), state.get_best_param()?.clone()))
        }};
    }
    if backtracking {
        run!(BacktrackingLineSearch::new(ArmijoCondition::new(1e-4).ok()?))
    } else {
        run!(MoreThuenteLineSearch::new())
    }
}

/// BFGS iterations per run. An aborted run loses only its own progress.
const CHUNK: u64 = 100;

fn run_bfgs(problem: Problem<'_>, start: Vec<f64>) -> Result<OracleFit> {
    let mut x = start;
    let mut best = problem.cost(&x).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut backtracking = false;
    let mut stale = 0;
    for _ in 0..1000 {
        let g = problem.gradient(&x).map_err(|e| Error::Degenerate(e.to_string()))?;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gnorm > 1e-12) {
            break;
        }
        let h0 = (1.0 / gnorm).min(1.0);
        let gain = match bfgs_once(&problem, &x, h0, backtracking) {
            Some((cost, next)) if cost < best => {
                let gain = best - cost;
                best = cost;
                x = next;
                gain
            }
            Some(_) => 0.0,
            None => {
                backtracking = !backtracking;
                0.0
            }
        };
        stale = if gain > 1e-12 { 0 } else { stale + 1 };
        if stale >= 3 {
            break;
        }
    }
    let (zeta, lambda) = problem.split(&x);
    let pll = direct_penalized_loglik(problem.design, problem.gamma, &zeta, &lambda);
    Ok(OracleFit { zeta, lambda, pll })
}

impl CostFunction for &Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        (*self).cost(x)
    }
}

impl Gradient for &Problem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        (*self).gradient(x)
    }
}

fn start_point(design: &DesignSet, k: usize) -> Vec<f64> {
    let q = design.q();
    std::iter::repeat_n(0.0, k).chain(std::iter::repeat_n((1.0 / q as f64).ln(), q)).collect()
}

/// Maximizes the penalized observed loglikelihood over `(ζ, log λ)`.
pub fn direct_fit(design: &DesignSet, gamma: f64) -> Result<OracleFit> {
    let dim = design.dim();
    let problem = Problem { design, gamma, z0: DVector::zeros(dim), basis: balanced(design, DMatrix::identity(dim, dim)) };
    run_bfgs(problem, start_point(design, dim))
}

/// Maximizes subject to `A ζ = ρ`. The feasible set is parametrized
/// through a null-space basis from an eigendecomposition of the projector
/// `I - Aᵀ(AAᵀ)⁻¹A`.
pub fn direct_constrained_fit(design: &DesignSet, gamma: f64, a: &DMatrix<f64>, rho: &DVector<f64>) -> Result<OracleFit> {
    let dim = design.dim();
    let gram = (a * a.transpose()).try_inverse().ok_or_else(|| Error::Degenerate("constraint rows are dependent".into()))?;
    let pinv = a.transpose() * gram;
    let z0 = &pinv * rho;
    let proj = DMatrix::identity(dim, dim) - &pinv * a;
    let eig = proj.symmetric_eigen();
    let cols: Vec<DVector<f64>> = (0..dim).filter(|&j| eig.eigenvalues[j] > 0.5).map(|j| eig.eigenvectors.column(j).clone_owned()).collect();
    let basis = balanced(design, DMatrix::from_columns(&cols));
    let k = basis.ncols();
    run_bfgs(Problem { design, gamma, z0, basis }, start_point(design, k))
}

/// Exact leave-one-out refits and the resulting cross-validation score.
#[derive(Debug, Clone)]
pub struct ExactLoo {
    pub zeta: Vec<DVector<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub score: f64,
}

/// Refits without each subject in turn (warm-started from `full`) and
/// scores each held-out subject with the same floor as the approximate
/// score.
pub fn exact_loo(design: &DesignSet, gamma: f64, full: &FitState, opts: &FitOptions) -> Result<ExactLoo> {
    let n = design.n();
    let mut out = ExactLoo { zeta: Vec::new(), lambda: Vec::new(), loglik: Vec::new(), score: 0.0 };
    for i in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let st = fit_from(&design.subset(&keep), gamma, full.clone(), opts)?;
        let (ll, _) = capped_subject_loglik(design, i, &st.zeta, &st.lambda);
        out.loglik.push(ll);
        out.zeta.push(st.zeta);
        out.lambda.push(st.lambda);
    }
    out.score = -crate::stats::sorted_sum(out.loglik.clone()) / n as f64;
    Ok(out)
}
