//! EM algorithm with Poisson data augmentation.
//!
//! Each subject's interval `(L_i, R_i]` is replaced by independent Poisson
//! counts `P_ik` with means `λ_k exp(ζᵀX̃_ik)`; the observed data are
//! `Σ_{t_k ≤ L} P_ik = 0` and `Σ_{L < t_k ≤ R} P_ik > 0`. The E-step takes
//! posterior means of the counts, the M-step takes one damped Newton step on
//! the profiled working objective for `ζ` and updates the jumps `λ_k` in
//! closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{check_params, subject_logliks, DesignSet, LinearPredictor};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// Total bracketing weight below which the E-step uses its series limit.
const SMALL_MASS: f64 = 1e-12;
const MAX_HALVINGS: usize = 30;
const MAX_EXTRAPOLATION: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Squared extrapolation between EM cycles (monotone safeguarded).
    pub accelerate: bool,
    /// Also stop once the objective gains less than this over the last
    /// `PLL_WINDOW` iterations. Zero disables the rule.
    pub pll_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 5e-3, max_iter: 5000, accelerate: true, pll_tol: 0.0 }
    }
}

pub const PLL_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    /// Working parameter `(α, d, c)` in the coordinates of the design.
    pub zeta: DVector<f64>,
    /// Jumps of the cumulative baseline hazard at `t_1..t_q`.
    pub lambda: Vec<f64>,
    pub iter: usize,
    /// Penalized observed loglikelihood: entry 0 is the starting value, entry
    /// `s` the value after iteration `s`.
    pub pll_trace: Vec<f64>,
    pub converged: bool,
    pub clamp_count: usize,
}

impl FitState {
    /// `ζ = 0`, `λ_k = 1/q`.
    pub fn initial(design: &DesignSet) -> Self {
        let q = design.q();
        Self {
            zeta: DVector::zeros(design.dim()),
            lambda: vec![1.0 / q as f64; q],
            iter: 0,
            pll_trace: Vec::new(),
            converged: false,
            clamp_count: 0,
        }
    }

    pub fn from_params(zeta: DVector<f64>, lambda: Vec<f64>) -> Self {
        Self {
            zeta,
            lambda,
            iter: 0,
            pll_trace: Vec::new(),
            converged: false,
            clamp_count: 0,
        }
    }

    /// Final penalized observed loglikelihood.
    pub fn pll(&self) -> f64 {
        self.pll_trace.last().copied().unwrap_or(f64::NAN)
    }

    /// Cumulative baseline hazard at `t_1..t_q`.
    pub fn cumulative_hazard(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .scan(0.0, |acc, &l| {
                *acc += l;
                Some(*acc)
            })
            .collect()
    }

    /// Largest single-step decrease of the penalized loglikelihood (0 when
    /// the trace is nondecreasing).
    pub fn worst_descent(&self) -> f64 {
        self.pll_trace.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max)
    }
}

/// Posterior means `Ê(P_ik)`, stored per subject over `k ∈ [lo, hi)`.
#[derive(Debug, Clone)]
pub struct EStepResult {
    start: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl EStepResult {
    /// First grid index and the run of posterior means for subject `i`.
    pub fn subject(&self, i: usize) -> (usize, &[f64]) {
        (self.start[i], &self.values[i])
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        let s = self.start[i];
        if k < s {
            0.0
        } else {
            self.values[i].get(k - s).copied().unwrap_or(0.0)
        }
    }

    /// `e_k = Σ_i Ê(P_ik)`.
    pub fn totals(&self, q: usize) -> Vec<f64> {
        let mut e = vec![0.0; q];
        for (s, v) in self.start.iter().zip(&self.values) {
            for (j, x) in v.iter().enumerate() {
                e[s + j] += x;
            }
        }
        e
    }

    pub fn subject_totals(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.iter().sum()).collect()
    }

    /// Multiplies every posterior mean by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            start: self.start.clone(),
            values: self.values.iter().map(|v| v.iter().map(|x| x * factor).collect()).collect(),
        }
    }
}

pub fn e_step(design: &DesignSet, state: &FitState) -> EStepResult {
    let eta = design.linear_predictor(&state.zeta);
    e_step_with(design, &eta, &state.lambda)
}

pub(crate) fn e_step_with(design: &DesignSet, eta: &LinearPredictor, lambda: &[f64]) -> EStepResult {
    let mut start = Vec::with_capacity(design.n());
    let mut values = Vec::with_capacity(design.n());
    for (i, s) in design.index().iter().enumerate() {
        start.push(s.lo);
        let Some(hi) = s.hi else {
            values.push(Vec::new());
            continue;
        };
        let mu: Vec<f64> = (s.lo..hi).map(|k| lambda[k] * eta.at(i, k).exp()).collect();
        let total: f64 = mu.iter().sum();
        let v = if total >= SMALL_MASS {
            let den = -(-total).exp_m1();
            mu.iter().map(|m| m / den).collect()
        } else if total > 0.0 {
            mu.iter().map(|m| m / total).collect()
        } else {
            let share = 1.0 / mu.len() as f64;
            vec![share; mu.len()]
        };
        values.push(v);
    }
    EStepResult { start, values }
}

/// Risk-set sums at every grid point: `S0_k = Σ_{R*_i ≥ t_k} e^{η_ik}` and
/// `S1_k = Σ_{R*_i ≥ t_k} e^{η_ik} X̃_ik` (row `k` of `s1`).
pub(crate) struct RiskSums {
    pub s0: Vec<f64>,
    pub s1: DMatrix<f64>,
}

pub(crate) fn risk_sums(design: &DesignSet, eta: &LinearPredictor) -> RiskSums {
    let (n, q, dim) = (design.n(), design.q(), design.dim());
    let idx = design.index();
    if eta.is_time_constant() {
        let x = design.xtil();
        let mut b0 = vec![0.0; q + 1];
        let mut b1 = DMatrix::zeros(q + 1, dim);
        for i in 0..n {
            let w = eta.subject(i).exp();
            let r = idx[i].risk_end;
            b0[r] += w;
            let mut row = b1.row_mut(r);
            row += x.row(i) * w;
        }
        let mut s0 = vec![0.0; q];
        let mut s1 = DMatrix::zeros(q, dim);
        let mut acc0 = 0.0;
        let mut acc1 = DVector::<f64>::zeros(dim).transpose();
        for k in (0..q).rev() {
            acc0 += b0[k + 1];
            acc1 += b1.row(k + 1);
            s0[k] = acc0;
            s1.row_mut(k).copy_from(&acc1);
        }
        RiskSums { s0, s1 }
    } else {
        let mut s0 = vec![0.0; q];
        let mut s1 = DMatrix::zeros(q, dim);
        for k in 0..q {
            for i in 0..n {
                if idx[i].risk_end > k {
                    let w = eta.at(i, k).exp();
                    s0[k] += w;
                    let xr = design.row(i, k).transpose();
                    let mut row = s1.row_mut(k);
                    row += xr * w;
                }
            }
        }
        RiskSums { s0, s1 }
    }
}

/// Value, gradient and (optionally) Hessian of the penalized working objective
/// `n⁻¹ Σ_i Σ_k Ê_ik [ζᵀX̃_ik - log S0_k(ζ)] - γ ζᵀQ̃ζ`.
#[derive(Debug, Clone)]
pub struct WorkingEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

pub fn working_objective(
    design: &DesignSet,
    estep: &EStepResult,
    zeta: &DVector<f64>,
    gamma: f64,
    with_hess: bool,
) -> WorkingEval {
    let eta = design.linear_predictor(zeta);
    let mut ev = working_unpenalized(design, estep, &eta, with_hess);
    let pz = design.penalty() * zeta;
    ev.value -= gamma * zeta.dot(&pz);
    ev.grad -= pz * (2.0 * gamma);
    if let Some(h) = ev.hess.as_mut() {
        *h -= design.penalty() * (2.0 * gamma);
    }
    ev
}

/// Working objective value only; cheaper than [`working_objective`].
pub(crate) fn working_value(design: &DesignSet, estep: &EStepResult, zeta: &DVector<f64>, gamma: f64) -> f64 {
    let eta = design.linear_predictor(zeta);
    let q = design.q();
    let e = estep.totals(q);
    let s0 = risk_s0(design, &eta);
    let mut v = 0.0;
    for i in 0..design.n() {
        let (st, vals) = estep.subject(i);
        for (j, x) in vals.iter().enumerate() {
            v += x * eta.at(i, st + j);
        }
    }
    for k in 0..q {
        if e[k] > 0.0 {
            v -= e[k] * s0[k].ln();
        }
    }
    v / design.n() as f64 - gamma * design.penalty_value(zeta)
}

fn risk_s0(design: &DesignSet, eta: &LinearPredictor) -> Vec<f64> {
    let q = design.q();
    let idx = design.index();
    if eta.is_time_constant() {
        let mut b0 = vec![0.0; q + 1];
        for (i, s) in idx.iter().enumerate() {
            b0[s.risk_end] += eta.subject(i).exp();
        }
        let mut s0 = vec![0.0; q];
        let mut acc = 0.0;
        for k in (0..q).rev() {
            acc += b0[k + 1];
            s0[k] = acc;
        }
        s0
    } else {
        (0..q)
            .map(|k| {
                idx.iter()
                    .enumerate()
                    .filter(|(_, s)| s.risk_end > k)
                    .map(|(i, _)| eta.at(i, k).exp())
                    .sum()
            })
            .collect()
    }
}

fn working_unpenalized(design: &DesignSet, estep: &EStepResult, eta: &LinearPredictor, with_hess: bool) -> WorkingEval {
    let (n, q, dim) = (design.n(), design.q(), design.dim());
    let nf = n as f64;
    let e = estep.totals(q);
    let rs = risk_sums(design, eta);
    let idx = design.index();

    let mut value = 0.0;
    for i in 0..n {
        let (st, vals) = estep.subject(i);
        for (j, x) in vals.iter().enumerate() {
            value += x * eta.at(i, st + j);
        }
    }
    for k in 0..q {
        if e[k] > 0.0 {
            value -= e[k] * rs.s0[k].ln();
        }
    }

    if eta.is_time_constant() {
        let x = design.xtil();
        // a_i = e^{η_i} Σ_{k < risk_end_i} e_k / S0_k
        let mut cum = vec![0.0; q + 1];
        for k in 0..q {
            let r = if e[k] > 0.0 { e[k] / rs.s0[k] } else { 0.0 };
            cum[k + 1] = cum[k] + r;
        }
        let etot = estep.subject_totals();
        let a: Vec<f64> = (0..n).map(|i| eta.subject(i).exp() * cum[idx[i].risk_end]).collect();
        let coef = DVector::from_iterator(n, (0..n).map(|i| etot[i] - a[i]));
        let grad = x.transpose() * coef / nf;
        let hess = with_hess.then(|| {
            let sx = DMatrix::from_fn(n, dim, |i, j| a[i].sqrt() * x[(i, j)]);
            let active: Vec<usize> = (0..q).filter(|&k| e[k] > 0.0).collect();
            let m = DMatrix::from_fn(active.len(), dim, |r, j| {
                let k = active[r];
                e[k].sqrt() / rs.s0[k] * rs.s1[(k, j)]
            });
            let h = m.transpose() * &m - sx.transpose() * &sx;
            symmetrize(h / nf)
        });
        WorkingEval { value: value / nf, grad, hess }
    } else {
        let mut grad = DVector::zeros(dim);
        for i in 0..n {
            let (st, vals) = estep.subject(i);
            for (j, x) in vals.iter().enumerate() {
                grad.axpy(*x, &design.row(i, st + j), 1.0);
            }
        }
        let mut hess = with_hess.then(|| DMatrix::zeros(dim, dim));
        for k in 0..q {
            if e[k] <= 0.0 {
                continue;
            }
            let s1 = rs.s1.row(k).transpose();
            grad.axpy(-e[k] / rs.s0[k], &s1, 1.0);
            if let Some(h) = hess.as_mut() {
                let mut s2 = DMatrix::zeros(dim, dim);
                for i in 0..n {
                    if idx[i].risk_end > k {
                        let xr = design.row(i, k);
                        s2.ger(eta.at(i, k).exp(), &xr, &xr, 1.0);
                    }
                }
                *h -= (s2 / rs.s0[k] - &s1 * s1.transpose() / (rs.s0[k] * rs.s0[k])) * e[k];
            }
        }
        WorkingEval {
            value: value / nf,
            grad: grad / nf,
            hess: hess.map(|h| symmetrize(h / nf)),
        }
    }
}

fn symmetrize(h: DMatrix<f64>) -> DMatrix<f64> {
    (&h + h.transpose()) * 0.5
}

/// One damped Newton step on the working objective. With `basis = Some(A0)`
/// the step is restricted to the column space of `A0`.
pub(crate) fn newton_update(
    design: &DesignSet,
    estep: &EStepResult,
    zeta: &DVector<f64>,
    gamma: f64,
    basis: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    let ev = working_objective(design, estep, zeta, gamma, true);
    let info = -ev.hess.expect("requested");
    let step = match basis {
        None => SpdFactor::new(&info)?.solve(&ev.grad),
        Some(a0) => {
            let reduced = a0.transpose() * &info * a0;
            let reduced = symmetrize(reduced);
            let rhs = a0.transpose() * &ev.grad;
            a0 * SpdFactor::new(&reduced)?.solve(&rhs)
        }
    };
    let mut t = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let cand = zeta + &step * t;
        if working_value(design, estep, &cand, gamma) >= ev.value {
            return Ok(cand);
        }
        t *= 0.5;
    }
    Ok(zeta.clone())
}

/// Newton update of `ζ` for fixed posterior means.
pub fn m_step_zeta(design: &DesignSet, estep: &EStepResult, state: &FitState, gamma: f64) -> Result<DVector<f64>> {
    newton_update(design, estep, &state.zeta, gamma, None)
}

/// Closed-form jump update `λ_k = Σ_i Ê_ik / Σ_{R*_i ≥ t_k} e^{ζᵀX̃_ik}`.
pub fn m_step_lambda(design: &DesignSet, estep: &EStepResult, zeta: &DVector<f64>) -> Vec<f64> {
    let eta = design.linear_predictor(zeta);
    let s0 = risk_s0(design, &eta);
    estep
        .totals(design.q())
        .into_iter()
        .zip(s0)
        .map(|(e, s)| if s > 0.0 && e > 0.0 { e / s } else { 0.0 })
        .collect()
}

pub(crate) fn penalized_loglik(design: &DesignSet, zeta: &DVector<f64>, lambda: &[f64], gamma: f64) -> Result<(f64, usize)> {
    let eta = design.linear_predictor(zeta);
    let ll = subject_logliks(design, &eta, lambda);
    if let Some(i) = ll.iter().position(|v| !v.is_finite()) {
        return Err(Error::ZeroMass { id: design.ids()[i].clone() });
    }
    Ok((crate::stats::sorted_sum(ll) / design.n() as f64 - gamma * design.penalty_value(zeta), eta.clamps))
}

/// Runs EM from `ζ = 0`, `λ_k = 1/q`.
pub fn fit(design: &DesignSet, gamma: f64, opts: &FitOptions) -> Result<FitState> {
    fit_from(design, gamma, FitState::initial(design), opts)
}

/// Runs EM from a given starting point.
pub fn fit_from(design: &DesignSet, gamma: f64, init: FitState, opts: &FitOptions) -> Result<FitState> {
    run_em(design, gamma, init, opts, None)
}

/// One generalized-EM map `θ ↦ (ζ', λ')`.
fn em_map(
    design: &DesignSet,
    gamma: f64,
    zeta: &DVector<f64>,
    lambda: &[f64],
    basis: Option<&DMatrix<f64>>,
    clamps: &mut usize,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let eta = design.linear_predictor(zeta);
    *clamps += eta.clamps;
    let es = e_step_with(design, &eta, lambda);
    let zeta = newton_update(design, &es, zeta, gamma, basis)?;
    let lambda = m_step_lambda(design, &es, &zeta);
    Ok((zeta, lambda))
}

/// Largest absolute change over `ζ` and the jumps with a nonempty risk set.
fn max_change(z1: &DVector<f64>, l1: &[f64], z0: &DVector<f64>, l0: &[f64], frozen: &[bool]) -> f64 {
    let dl = l1
        .iter()
        .zip(l0)
        .zip(frozen)
        .filter(|(_, f)| !**f)
        .map(|((a, b), _)| (a - b).abs())
        .fold(0.0, f64::max);
    (z1 - z0).amax().max(dl)
}

fn stalled(trace: &[f64], pll_tol: f64) -> bool {
    pll_tol > 0.0 && trace.len() > PLL_WINDOW && trace[trace.len() - 1] - trace[trace.len() - 1 - PLL_WINDOW] < pll_tol
}

pub(crate) fn run_em(
    design: &DesignSet,
    gamma: f64,
    init: FitState,
    opts: &FitOptions,
    basis: Option<&DMatrix<f64>>,
) -> Result<FitState> {
    check_params(design, &init.zeta, &init.lambda)?;
    let frozen: Vec<bool> = {
        let eta = design.linear_predictor(&init.zeta);
        risk_s0(design, &eta).into_iter().map(|s| s <= 0.0).collect()
    };
    let mut state = init;
    state.iter = 0;
    state.converged = false;
    state.clamp_count = 0;
    state.pll_trace.clear();
    for (k, f) in frozen.iter().enumerate() {
        if *f {
            state.lambda[k] = 0.0;
        }
    }
    let (pll0, _) = penalized_loglik(design, &state.zeta, &state.lambda, gamma)?;
    state.pll_trace.push(pll0);
    let plain = |state: &mut FitState| -> Result<bool> {
        let (z, l) = em_map(design, gamma, &state.zeta, &state.lambda, basis, &mut state.clamp_count)?;
        let change = max_change(&z, &l, &state.zeta, &state.lambda, &frozen);
        let (pll, c) = penalized_loglik(design, &z, &l, gamma)?;
        state.clamp_count += c;
        state.zeta = z;
        state.lambda = l;
        state.iter += 1;
        state.pll_trace.push(pll);
        Ok(change < opts.tol || stalled(&state.pll_trace, opts.pll_tol))
    };
    // With acceleration each cycle takes two plain steps θ0 → θ1 → θ2, then
    // one step from the extrapolated point θ0 - 2a r + a² v
    // (r = θ1 - θ0, v = θ2 - 2θ1 + θ0, a = -‖r‖/‖v‖), which is kept only if
    // it does not lower the objective below that at θ2.
    while state.iter < opts.max_iter {
        let z0 = state.zeta.clone();
        let l0 = state.lambda.clone();
        if plain(&mut state)? {
            state.converged = true;
            break;
        }
        if !opts.accelerate || state.iter >= opts.max_iter {
            continue;
        }
        let z1 = state.zeta.clone();
        let l1 = state.lambda.clone();
        if plain(&mut state)? {
            state.converged = true;
            break;
        }
        if state.iter >= opts.max_iter {
            break;
        }
        let rz = &z1 - &z0;
        let vz = &state.zeta - &z1 * 2.0 + &z0;
        let live = |k: &usize| !frozen[*k];
        let rl: Vec<f64> = (0..l0.len()).map(|k| if live(&k) { l1[k] - l0[k] } else { 0.0 }).collect();
        let vl: Vec<f64> = (0..l0.len()).map(|k| if live(&k) { state.lambda[k] - 2.0 * l1[k] + l0[k] } else { 0.0 }).collect();
        let rn = (rz.norm_squared() + rl.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let vn = (vz.norm_squared() + vl.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if !(vn > 0.0) {
            continue;
        }
        let a = (-rn / vn).clamp(-MAX_EXTRAPOLATION, -1.0);
        if a == -1.0 {
            continue;
        }
        let ze = &z0 - &rz * (2.0 * a) + &vz * (a * a);
        let le: Vec<f64> = (0..l0.len())
            .map(|k| if live(&k) { (l0[k] - 2.0 * a * rl[k] + a * a * vl[k]).max(0.0) } else { 0.0 })
            .collect();
        let mut clamps = 0;
        let Ok((z3, l3)) = em_map(design, gamma, &ze, &le, basis, &mut clamps) else {
            continue;
        };
        if let Ok((pll3, c)) = penalized_loglik(design, &z3, &l3, gamma) {
            if pll3 >= state.pll() {
                state.clamp_count += clamps + c;
                state.zeta = z3;
                state.lambda = l3;
                state.iter += 1;
                state.pll_trace.push(pll3);
                if stalled(&state.pll_trace, opts.pll_tol) {
                    state.converged = true;
                    break;
                }
            }
        }
    }
    Ok(state)
}
