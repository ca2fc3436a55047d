//! Smoothing-parameter selection by approximate leave-one-out
//! cross-validation.
//!
//! Leave-one-out estimates are first-order corrections of the full-data fit:
//! `ζ^(-i) ≈ ζ̂ - Ĩ_γ⁻¹ ∇l̃_i(ζ̂)` with `Ĩ_γ` the penalized working
//! information, and the jumps are corrected for the change in the risk-set
//! weights and for the removal of subject `i`. The score plugs these into each
//! subject's observed loglikelihood.

use nalgebra::{DMatrix, DVector};

use crate::data::{interval_log_mass, DesignSet, EXP_CLAMP};
use crate::em::{e_step, fit_from, risk_sums, working_objective, EStepResult, FitOptions, FitState, RiskSums};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// Floor for a subject's plug-in probability mass.
pub const MASS_FLOOR: f64 = 1e-12;

/// Unpenalized and penalized working information at the converged fit, with
/// per-subject working gradients.
pub struct WorkingInfo {
    pub i0: DMatrix<f64>,
    pub igamma: DMatrix<f64>,
    pub grads: Vec<DVector<f64>>,
    factor: SpdFactor,
}

impl WorkingInfo {
    pub fn new(design: &DesignSet, estep: &EStepResult, zeta: &DVector<f64>, gamma: f64) -> Result<Self> {
        let ev = working_objective(design, estep, zeta, 0.0, true);
        let i0 = -ev.hess.expect("requested");
        let igamma = &i0 + design.penalty() * (2.0 * gamma);
        let factor = SpdFactor::new(&igamma)?;
        let eta = design.linear_predictor(zeta);
        let rs = risk_sums(design, &eta);
        let grads = (0..design.n()).map(|i| subject_gradient(design, estep, &rs, i)).collect();
        Ok(Self { i0, igamma, grads, factor })
    }
}

fn subject_gradient(design: &DesignSet, estep: &EStepResult, rs: &RiskSums, i: usize) -> DVector<f64> {
    let (st, vals) = estep.subject(i);
    let mut g = DVector::zeros(design.dim());
    for (j, &e) in vals.iter().enumerate() {
        let k = st + j;
        if e == 0.0 {
            continue;
        }
        g.axpy(e, &design.row(i, k), 1.0);
        g.axpy(-e / rs.s0[k], &rs.s1.row(k).transpose(), 1.0);
    }
    g / design.n() as f64
}

/// Subject `i`'s contribution `l̃_i(ζ)` to the unpenalized working objective,
/// with its gradient and Hessian. The log-sum term runs over all subjects.
pub fn working_contrib(design: &DesignSet, estep: &EStepResult, zeta: &DVector<f64>, i: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
    let dim = design.dim();
    let nf = design.n() as f64;
    let eta = design.linear_predictor(zeta);
    let rs = risk_sums(design, &eta);
    let (st, vals) = estep.subject(i);
    let mut value = 0.0;
    let mut hess = DMatrix::zeros(dim, dim);
    for (j, &e) in vals.iter().enumerate() {
        let k = st + j;
        if e == 0.0 {
            continue;
        }
        value += e * (eta.at(i, k) - rs.s0[k].ln());
        let mut s2 = DMatrix::zeros(dim, dim);
        for (r, s) in design.index().iter().enumerate() {
            if s.risk_end > k {
                let x = design.row(r, k);
                s2.ger(eta.at(r, k).exp(), &x, &x, 1.0);
            }
        }
        let s1 = rs.s1.row(k).transpose();
        hess -= (s2 / rs.s0[k] - &s1 * s1.transpose() / (rs.s0[k] * rs.s0[k])) * e;
    }
    (value / nf, subject_gradient(design, estep, &rs, i), hess / nf)
}

/// `ζ̂^(-i) ≈ ζ̂ - Ĩ_γ⁻¹ ∇l̃_i(ζ̂)`.
pub fn loo_zeta(info: &WorkingInfo, zeta_hat: &DVector<f64>, i: usize) -> DVector<f64> {
    zeta_hat - info.factor.solve(&info.grads[i])
}

/// Approximate leave-one-out jumps; negative values are floored at 0 and
/// counted.
pub fn loo_lambda(
    design: &DesignSet,
    estep: &EStepResult,
    state: &FitState,
    zeta_loo: &DVector<f64>,
    i: usize,
) -> (Vec<f64>, usize) {
    let eta = design.linear_predictor(&state.zeta);
    let rs = risk_sums(design, &eta);
    loo_lambda_with(design, estep, state, &eta, &rs, zeta_loo, i)
}

fn loo_lambda_with(
    design: &DesignSet,
    estep: &EStepResult,
    state: &FitState,
    eta: &crate::data::LinearPredictor,
    rs: &RiskSums,
    zeta_loo: &DVector<f64>,
    i: usize,
) -> (Vec<f64>, usize) {
    let delta = zeta_loo - &state.zeta;
    let shift = &rs.s1 * &delta;
    let risk_end = design.index()[i].risk_end;
    let mut floored = 0;
    let lam = (0..design.q())
        .map(|k| {
            let s0 = rs.s0[k];
            if s0 <= 0.0 {
                return 0.0;
            }
            let lk = state.lambda[k];
            let w_ik = if risk_end > k { eta.at(i, k).exp() } else { 0.0 };
            let v = lk * (1.0 - shift[k] / s0) - (estep.get(i, k) - lk * w_ik) / s0;
            if v < 0.0 {
                floored += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    (lam, floored)
}

/// Per-subject detail of an approximate leave-one-out evaluation.
#[derive(Debug, Clone)]
pub struct LooDetail {
    pub zeta: Vec<DVector<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub floored: usize,
    pub capped: usize,
}

/// Observed loglikelihood of subject `i` alone under `(zeta, lambda)`,
/// floored at `log(MASS_FLOOR)`. Returns the value and whether it was capped.
pub(crate) fn capped_subject_loglik(design: &DesignSet, i: usize, zeta: &DVector<f64>, lambda: &[f64]) -> (f64, bool) {
    let s = &design.index()[i];
    let fixed = design.is_time_constant().then(|| design.xtil().row(i).transpose().dot(zeta).clamp(-EXP_CLAMP, EXP_CLAMP).exp());
    let mu = |k: usize| lambda[k] * fixed.unwrap_or_else(|| design.row(i, k).dot(zeta).clamp(-EXP_CLAMP, EXP_CLAMP).exp());
    let hl: f64 = (0..s.lo).map(mu).sum();
    let hr = s.hi.map_or(f64::INFINITY, |h| hl + (s.lo..h).map(mu).sum::<f64>());
    let v = interval_log_mass(hl, hr);
    let floor = MASS_FLOOR.ln();
    if v.is_finite() && v >= floor {
        (v, false)
    } else {
        (floor, true)
    }
}

pub fn aloocv_detail(design: &DesignSet, gamma: f64, state: &FitState) -> Result<LooDetail> {
    let estep = e_step(design, state);
    let info = WorkingInfo::new(design, &estep, &state.zeta, gamma)?;
    let eta = design.linear_predictor(&state.zeta);
    let rs = risk_sums(design, &eta);
    let mut out = LooDetail {
        zeta: Vec::with_capacity(design.n()),
        lambda: Vec::with_capacity(design.n()),
        loglik: Vec::with_capacity(design.n()),
        floored: 0,
        capped: 0,
    };
    for i in 0..design.n() {
        let z = loo_zeta(&info, &state.zeta, i);
        let (lam, fl) = loo_lambda_with(design, &estep, state, &eta, &rs, &z, i);
        let (ll, capped) = capped_subject_loglik(design, i, &z, &lam);
        out.floored += fl;
        out.capped += capped as usize;
        out.loglik.push(ll);
        out.zeta.push(z);
        out.lambda.push(lam);
    }
    Ok(out)
}

/// `-n⁻¹ Σ_i l_i(ζ̂^(-i), Λ̂^(-i))` with approximate leave-one-out estimates.
pub fn aloocv_score(design: &DesignSet, gamma: f64, state: &FitState) -> Result<f64> {
    let d = aloocv_detail(design, gamma, state)?;
    Ok(-crate::stats::sorted_sum(d.loglik) / design.n() as f64)
}

/// Selection report over a grid of smoothing parameters.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub gamma_grid: Vec<f64>,
    /// Score per grid entry (same order as `gamma_grid`); `None` where the
    /// fit failed.
    pub scores: Vec<Option<f64>>,
    pub selected: f64,
    pub selected_fit: FitState,
    /// Largest per-iteration decrease of the objective over every grid fit.
    pub worst_descent: f64,
}

/// `count` log-spaced values on `[1e-6, 1e-1]` scaled by `(n/100)^{-2/3}`.
pub fn default_gamma_grid(n: usize) -> Vec<f64> {
    let scale = (n as f64 / 100.0).powf(-2.0 / 3.0);
    (0..11).map(|j| 10f64.powf(-6.0 + 0.5 * j as f64) * scale).collect()
}

/// Fits every grid value (warm-started in decreasing order of `γ`) and
/// returns the minimizer of the approximate leave-one-out score; ties go to
/// the larger `γ`.
pub fn select_gamma(design: &DesignSet, grid: &[f64], opts: &FitOptions) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::Empty("gamma grid"));
    }
    if grid.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::Config("gamma values must be positive".into()));
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut scores = vec![None; grid.len()];
    let mut fits: Vec<Option<FitState>> = vec![None; grid.len()];
    let mut warm = FitState::initial(design);
    let mut worst_descent: f64 = 0.0;
    for &j in &order {
        let Ok(st) = fit_from(design, grid[j], warm.clone(), opts) else {
            continue;
        };
        if let Ok(s) = aloocv_score(design, grid[j], &st) {
            if s.is_finite() {
                scores[j] = Some(s);
            }
        }
        worst_descent = worst_descent.max(st.worst_descent());
        warm = st.clone();
        fits[j] = Some(st);
    }
    let mut best: Option<usize> = None;
    for &j in &order {
        if let Some(s) = scores[j] {
            // `order` is decreasing in γ, so strict improvement keeps ties at the larger γ.
            if best.is_none_or(|b| s < scores[b].unwrap()) {
                best = Some(j);
            }
        }
    }
    let b = best.ok_or(Error::AllFitsFailed)?;
    Ok(CvReport {
        gamma_grid: grid.to_vec(),
        scores,
        selected: grid[b],
        selected_fit: fits[b].take().expect("scored fits are kept"),
        worst_descent,
    })
}
