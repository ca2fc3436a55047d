//! Profile-likelihood inference for linear functionals `ρ = Aζ`.
//!
//! The profile loglikelihood `pl(ρ)` is the penalized observed loglikelihood
//! maximized subject to `Aζ = ρ`. Constrained maximization reuses the EM
//! iteration with Newton steps restricted to the null space of `A`. The
//! curvature of `pl` at `ρ̂` comes from forward second differences, and its
//! inverse estimates the covariance of `√n(ρ̂ - ρ)`.

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::DesignSet;
use crate::em::{run_em, FitOptions, FitState};
use crate::error::{Error, Result};
use crate::kernel::{kernel_smooth, shared_grid, trapezoid_weights, xi, FunctionalCurve, KernelContext};
use crate::linalg::{condition_number, null_space_basis};
use crate::stats::chisq_pvalue;

/// Condition number above which a Wald test is reported as inconclusive.
pub const MAX_CONDITION: f64 = 1e10;

/// A full-row-rank linear map `A` with an orthonormal basis `A0` of its null
/// space.
#[derive(Debug, Clone)]
pub struct Constraint {
    a: DMatrix<f64>,
    a0: DMatrix<f64>,
}

impl Constraint {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let a0 = null_space_basis(&a)?;
        Ok(Self { a, a0 })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// The same functionals expressed in the design's working coordinates.
    pub fn to_working(&self, design: &DesignSet) -> Result<Self> {
        Self::new(design.to_working(&self.a))
    }
}

/// `A = [I_p, 0]` selecting `α` out of `(α, d, c)`.
pub fn make_alpha_constraint(p: usize, m: usize, n: usize) -> Result<Constraint> {
    if p == 0 {
        return Err(Error::Config("no scalar covariates to constrain".into()));
    }
    let dim = p + m + n;
    let a = DMatrix::from_fn(p, dim, |r, c| if r == c { 1.0 } else { 0.0 });
    let a0 = DMatrix::from_fn(dim, dim - p, |r, c| if r == c + p { 1.0 } else { 0.0 });
    Ok(Constraint { a, a0 })
}

/// `ψ_1 = 1`, `ψ_{l+1}(s) = √2 cos(lπs)`, for `l < count`.
pub fn cosine_test_functions(grid: &Arc<[f64]>, count: usize) -> Result<Vec<FunctionalCurve>> {
    (0..count)
        .map(|l| {
            FunctionalCurve::from_fn(grid.clone(), |s| {
                if l == 0 {
                    1.0
                } else {
                    2f64.sqrt() * (l as f64 * std::f64::consts::PI * s).cos()
                }
            })
        })
        .collect()
}

/// Rows `(0_p, u_ld, u_lc)` with `u_ld,j = ∫ ξ_j b_l` and
/// `u_lc,i = ∫∫ Z_i(w) K1(w, s) b_l(s) dw ds`, so that row `l` applied to
/// `(α, d, c)` gives `∫ b_l β`.
pub fn make_beta_functional_constraint(
    ctx: &KernelContext,
    p: usize,
    curves: &[FunctionalCurve],
    test_fns: &[FunctionalCurve],
) -> Result<Constraint> {
    let grid = shared_grid(curves)?;
    if test_fns.is_empty() {
        return Err(Error::Empty("test function list"));
    }
    if test_fns.iter().any(|b| !b.shares_grid(&curves[0])) {
        return Err(Error::GridMismatch);
    }
    let (m, n) = (ctx.order(), curves.len());
    let tw = trapezoid_weights(grid);
    let mut a = DMatrix::zeros(test_fns.len(), p + m + n);
    for (l, b) in test_fns.iter().enumerate() {
        for j in 0..m {
            a[(l, p + j)] = grid.iter().zip(&tw).zip(b.values()).map(|((&s, w), v)| w * xi(j + 1, s) * v).sum();
        }
        let smooth = kernel_smooth(ctx, grid, b.values());
        let weighted: Vec<f64> = smooth.iter().zip(&tw).map(|(s, w)| s * w).collect();
        for (i, z) in curves.iter().enumerate() {
            a[(l, p + m + i)] = z.values().iter().zip(&weighted).map(|(z, w)| z * w).sum();
        }
    }
    Constraint::new(a)
}

/// Constrained maximization of the penalized loglikelihood subject to
/// `Aζ = ρ`, started from the projection of the unconstrained fit onto the
/// feasible set. `constraint` must be in working coordinates.
pub fn constrained_fit(
    design: &DesignSet,
    gamma: f64,
    constraint: &Constraint,
    rho: &DVector<f64>,
    base: &FitState,
    opts: &FitOptions,
) -> Result<FitState> {
    let a = constraint.a();
    if a.ncols() != design.dim() || rho.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "constraint {}x{} and target of length {} for {} parameters",
            a.nrows(),
            a.ncols(),
            rho.len(),
            design.dim()
        )));
    }
    let aat = a * a.transpose();
    let gap = rho - a * &base.zeta;
    let shift = aat
        .cholesky()
        .ok_or(Error::RankDeficient { rank: 0, rows: a.nrows() })?
        .solve(&gap);
    let zeta0 = &base.zeta + a.transpose() * shift;
    let init = FitState::from_params(zeta0, base.lambda.clone());
    run_em(design, gamma, init, opts, Some(constraint.a0()))
}

/// `pl(ρ)`: the penalized observed loglikelihood at the constrained maximizer.
pub fn profile_loglik(
    design: &DesignSet,
    gamma: f64,
    constraint: &Constraint,
    rho: &DVector<f64>,
    base: &FitState,
    opts: &FitOptions,
) -> Result<f64> {
    let st = constrained_fit(design, gamma, constraint, rho, base, opts)?;
    if !st.converged {
        return Err(Error::NotConverged { iterations: st.iter });
    }
    Ok(st.pll())
}

/// Forward second-difference Hessian of `f` at `x0`:
/// `H_ij = {f(x0) - f(x0+h e_i) - f(x0+h e_j) + f(x0+h e_i+h e_j)} / h²`.
/// Each distinct point is evaluated once.
pub fn forward_hessian<F>(f: F, x0: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("perturbation h must be positive, got {h}")));
    }
    let n = x0.len();
    // Point list: x0, x0 + h e_i, x0 + h(e_i + e_j) for i ≤ j.
    let mut steps: Vec<Vec<usize>> = vec![vec![]];
    steps.extend((0..n).map(|i| vec![i]));
    for i in 0..n {
        for j in i..n {
            steps.push(vec![i, j]);
        }
    }
    let values: Vec<f64> = steps
        .par_iter()
        .enumerate()
        .map(|(point, s)| {
            let mut x = x0.clone();
            for &i in s {
                x[i] += h;
            }
            f(&x).map_err(|e| Error::ProfilePoint { point, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let f0 = values[0];
    let fi = &values[1..=n];
    let mut hess = DMatrix::zeros(n, n);
    let mut at = n + 1;
    for i in 0..n {
        for j in i..n {
            let v = (f0 - fi[i] - fi[j] + values[at]) / (h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
            at += 1;
        }
    }
    Ok(hess)
}

/// Forward-difference Hessian of the profile loglikelihood at `rho_hat`.
pub fn profile_hessian(
    design: &DesignSet,
    gamma: f64,
    constraint: &Constraint,
    rho_hat: &DVector<f64>,
    h_n: f64,
    base: &FitState,
    opts: &FitOptions,
) -> Result<DMatrix<f64>> {
    profile_hessian_tracked(design, gamma, constraint, rho_hat, h_n, base, opts).map(|(h, _)| h)
}

/// Also returns the largest single-step decrease of the penalized
/// loglikelihood over every constrained fit.
fn profile_hessian_tracked(
    design: &DesignSet,
    gamma: f64,
    constraint: &Constraint,
    rho_hat: &DVector<f64>,
    h_n: f64,
    base: &FitState,
    opts: &FitOptions,
) -> Result<(DMatrix<f64>, f64)> {
    let worst = Mutex::new(0.0f64);
    let hess = forward_hessian(
        |r| {
            let st = constrained_fit(design, gamma, constraint, r, base, opts)?;
            let mut w = worst.lock().expect("poisoned");
            *w = w.max(st.worst_descent());
            drop(w);
            if !st.converged {
                return Err(Error::NotConverged { iterations: st.iter });
            }
            Ok(st.pll())
        },
        rho_hat,
        h_n,
    )?;
    Ok((hess, worst.into_inner().expect("poisoned")))
}

/// Default perturbation `5 n^{-1/2}`.
pub fn default_hn(n: usize) -> f64 {
    5.0 / (n as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct WaldTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Set when the covariance is not positive definite or its condition
    /// number exceeds `MAX_CONDITION`.
    pub inconclusive: bool,
}

#[derive(Debug, Clone)]
pub struct InferenceReport {
    pub rho_hat: DVector<f64>,
    /// `-∇²pl(ρ̂)`.
    pub neg_hessian: DMatrix<f64>,
    /// `{-∇²pl(ρ̂)}⁻¹`, the covariance of `√n(ρ̂ - ρ)`.
    pub scaled_covariance: DMatrix<f64>,
    /// Covariance of `ρ̂` itself.
    pub covariance: DMatrix<f64>,
    pub se: DVector<f64>,
    pub positive_definite: bool,
    pub condition: f64,
    pub h_n: f64,
    pub wald: Option<WaldTest>,
    /// Largest per-iteration decrease of the penalized loglikelihood across
    /// the constrained fits.
    pub worst_descent: f64,
}

fn report(n: usize, rho_hat: DVector<f64>, (hess, worst_descent): (DMatrix<f64>, f64), h_n: f64) -> InferenceReport {
    let neg = -hess;
    let positive_definite = neg.clone().cholesky().is_some();
    let condition = condition_number(&neg);
    let k = neg.nrows();
    let scaled = neg.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    let covariance = &scaled / n as f64;
    let se = covariance.diagonal().map(|v| if v >= 0.0 { v.sqrt() } else { f64::NAN });
    InferenceReport {
        rho_hat,
        neg_hessian: neg,
        scaled_covariance: scaled,
        covariance,
        se,
        positive_definite,
        condition,
        h_n,
        wald: None,
        worst_descent,
    }
}

/// Profile-likelihood covariance of `α̂`.
pub fn alpha_covariance(design: &DesignSet, gamma: f64, fit: &FitState, h_n: f64, opts: &FitOptions) -> Result<InferenceReport> {
    let l = design.layout();
    let con = make_alpha_constraint(l.p, l.m, l.c)?;
    let rho_hat = con.a() * &fit.zeta;
    let hess = profile_hessian_tracked(design, gamma, &con, &rho_hat, h_n, fit, opts)?;
    Ok(report(design.n(), rho_hat, hess, h_n))
}

/// Wald test of `β ≡ 0` through `ρ_l = ∫ b_l β`. `curves` are the functional
/// covariates the design was built from.
#[allow(clippy::too_many_arguments)]
pub fn global_beta_test(
    design: &DesignSet,
    gamma: f64,
    fit: &FitState,
    ctx: &KernelContext,
    curves: &[FunctionalCurve],
    test_fns: &[FunctionalCurve],
    h_n: f64,
    opts: &FitOptions,
) -> Result<InferenceReport> {
    let full = make_beta_functional_constraint(ctx, design.layout().p, curves, test_fns)?;
    let con = full.to_working(design)?;
    wald_for_constraint(design, gamma, fit, &con, h_n, opts)
}

/// Wald statistic `n ρ̂ᵀ{-∇²pl(ρ̂)}ρ̂` for `H₀: Aζ = 0` with `A` in working
/// coordinates.
pub fn wald_for_constraint(
    design: &DesignSet,
    gamma: f64,
    fit: &FitState,
    con: &Constraint,
    h_n: f64,
    opts: &FitOptions,
) -> Result<InferenceReport> {
    let rho_hat = con.a() * &fit.zeta;
    let hess = profile_hessian_tracked(design, gamma, con, &rho_hat, h_n, fit, opts)?;
    let mut rep = report(design.n(), rho_hat, hess, h_n);
    let statistic = design.n() as f64 * rep.rho_hat.dot(&(&rep.neg_hessian * &rep.rho_hat));
    let dof = con.rows();
    rep.wald = Some(WaldTest {
        statistic,
        dof,
        p_value: if statistic >= 0.0 { chisq_pvalue(statistic, dof) } else { f64::NAN },
        inconclusive: !rep.positive_definite || rep.condition > MAX_CONDITION,
    });
    Ok(rep)
}
