//! Sobolev-space kernel machinery on the unit interval.
//!
//! The coefficient function lives in `W_{2,m}[0,1]` with penalty `∫ (f^{(m)})²`.
//! The penalty null space is spanned by `ξ_j(s) = s^{j-1}/(j-1)!`, and the
//! penalized subspace has reproducing kernel
//! `K1(w, s) = ∫₀¹ G_m(w, u) G_m(s, u) du` with `G_m(s, u) = (s-u)₊^{m-1}/(m-1)!`.
//!
//! Functional covariates arrive sampled on a shared grid; every integral over
//! the curve domain is a trapezoid rule on that grid.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const GL_NODES: usize = 64;

/// A functional covariate sampled on a grid spanning `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalCurve {
    grid: Arc<[f64]>,
    values: Vec<f64>,
}

impl FunctionalCurve {
    pub fn new(grid: Arc<[f64]>, values: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::InvalidCurve(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: Arc<[f64]>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&s| f(s)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<[f64]> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shares_grid(&self, other: &FunctionalCurve) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid[..] == other.grid[..]
    }
}

/// `points` equally spaced nodes from 0 to 1 inclusive.
pub fn uniform_grid(points: usize) -> Arc<[f64]> {
    assert!(points >= 2, "a grid needs at least two points");
    let h = 1.0 / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { 1.0 } else { i as f64 * h })
        .collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidCurve("grid needs at least two points".into()));
    }
    if grid[0] != 0.0 || grid[grid.len() - 1] != 1.0 {
        return Err(Error::InvalidCurve("grid must start at 0 and end at 1".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidCurve("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Trapezoid weights for a strictly increasing grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let g = grid.len();
    let mut w = vec![0.0; g];
    for k in 0..g - 1 {
        let h = 0.5 * (grid[k + 1] - grid[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

/// Order of the Sobolev space plus the quadrature used for the transformed
/// covariates `Z̃(u)`.
#[derive(Debug, Clone)]
pub struct KernelContext {
    order: usize,
    quad_nodes: Vec<f64>,
    quad_weights: Vec<f64>,
}

impl KernelContext {
    pub fn new(order: usize, quad_nodes: Vec<f64>, quad_weights: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("Sobolev order must be at least 1".into()));
        }
        if quad_nodes.len() != quad_weights.len() || quad_nodes.is_empty() {
            return Err(Error::DimensionMismatch(
                "quadrature nodes and weights differ in length".into(),
            ));
        }
        if quad_nodes.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Config("quadrature nodes must lie in [0, 1]".into()));
        }
        if quad_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Config("quadrature weights must be positive".into()));
        }
        let total: f64 = quad_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("quadrature weights sum to {total}, not 1")));
        }
        Ok(Self {
            order,
            quad_nodes,
            quad_weights,
        })
    }

    /// Trapezoid quadrature on the covariate grid itself.
    pub fn on_grid(order: usize, grid: &[f64]) -> Result<Self> {
        validate_grid(grid)?;
        Self::new(order, grid.to_vec(), trapezoid_weights(grid))
    }

    /// Gauss–Legendre quadrature with `nodes` points mapped to `[0, 1]`.
    pub fn gauss_legendre(order: usize, nodes: usize) -> Result<Self> {
        let (x, w) = gauss_legendre_unit(nodes);
        Self::new(order, x, w)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn quad_nodes(&self) -> &[f64] {
        &self.quad_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// `K1(w, s)` without argument validation.
    #[inline]
    pub(crate) fn k1(&self, w: f64, s: f64) -> f64 {
        let a = w.min(s);
        if a <= 0.0 {
            return 0.0;
        }
        if self.order == 2 {
            return w * s * a - (w + s) * a * a / 2.0 + a * a * a / 3.0;
        }
        let (x, wt) = gl_cache();
        x.iter()
            .zip(wt)
            .map(|(&t, &wt)| {
                let u = a * t;
                wt * green(self.order, w, u) * green(self.order, s, u)
            })
            .sum::<f64>()
            * a
    }
}

/// `G_m(s, u) = (s - u)₊^{m-1} / (m-1)!`.
#[inline]
pub fn green(order: usize, s: f64, u: f64) -> f64 {
    let d = s - u;
    if d <= 0.0 {
        return 0.0;
    }
    d.powi(order as i32 - 1) / factorial(order - 1)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Null-space basis function `ξ_j(s) = s^{j-1}/(j-1)!`, `j` one-based.
pub fn null_basis_eval(order: usize, j: usize, s: f64) -> Result<f64> {
    if j == 0 || j > order {
        return Err(Error::IndexOutOfRange { index: j, max: order });
    }
    Ok(xi(j, s))
}

#[inline]
pub(crate) fn xi(j: usize, s: f64) -> f64 {
    s.powi(j as i32 - 1) / factorial(j - 1)
}

pub fn k1_eval(ctx: &KernelContext, w: f64, s: f64) -> Result<f64> {
    for (name, v) in [("w", w), ("s", s)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfDomain { name, value: v });
        }
    }
    Ok(ctx.k1(w, s))
}

/// Trapezoid approximation of `∫₀¹ curve(s) weight(s) ds`.
pub fn integrate_curve(curve: &FunctionalCurve, weight: Option<&FunctionalCurve>) -> Result<f64> {
    let tw = trapezoid_weights(curve.grid());
    match weight {
        None => Ok(dot(&tw, curve.values())),
        Some(w) => {
            if !curve.shares_grid(w) {
                return Err(Error::GridMismatch);
            }
            Ok(tw
                .iter()
                .zip(curve.values())
                .zip(w.values())
                .map(|((a, b), c)| a * b * c)
                .sum())
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `m × n` matrix `B` and `n × n` matrix `Q` of the representer reduction.
#[derive(Debug, Clone)]
pub struct GramMatrices {
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

pub(crate) fn shared_grid(curves: &[FunctionalCurve]) -> Result<&Arc<[f64]>> {
    let first = curves.first().ok_or(Error::Empty("curve list"))?;
    if curves.iter().any(|c| !c.shares_grid(first)) {
        return Err(Error::GridMismatch);
    }
    Ok(first.grid())
}

/// Transformed covariates `Z̃_i(u) = ∫ Z_i(w) G_m(w, u) dw` at the quadrature
/// nodes; returns an `nodes × n` matrix.
fn transformed_covariates(ctx: &KernelContext, curves: &[FunctionalCurve], grid: &[f64]) -> DMatrix<f64> {
    let tw = trapezoid_weights(grid);
    let nodes = ctx.quad_nodes();
    // kernel[(q, g)] = tw_g * G_m(grid_g, u_q)
    let kernel = DMatrix::from_fn(nodes.len(), grid.len(), |q, g| tw[g] * green(ctx.order, grid[g], nodes[q]));
    let zmat = DMatrix::from_fn(grid.len(), curves.len(), |g, i| curves[i].values[g]);
    kernel * zmat
}

pub fn compute_gram(ctx: &KernelContext, curves: &[FunctionalCurve]) -> Result<GramMatrices> {
    let grid = shared_grid(curves)?;
    let tw = trapezoid_weights(grid);
    let m = ctx.order;
    let b = DMatrix::from_fn(m, curves.len(), |j, i| {
        grid.iter()
            .zip(&tw)
            .zip(curves[i].values())
            .map(|((&s, w), z)| w * xi(j + 1, s) * z)
            .sum()
    });
    let ztil = transformed_covariates(ctx, curves, grid);
    let wz = DMatrix::from_fn(ztil.nrows(), ztil.ncols(), |q, i| ctx.quad_weights[q] * ztil[(q, i)]);
    let q = ztil.transpose() * wz;
    let q = (&q + q.transpose()) * 0.5;
    Ok(GramMatrices { b, q })
}

/// `∫ K1(w, s) f(s) ds` for every grid point `w`, with `f` sampled on the same grid.
pub(crate) fn kernel_smooth(ctx: &KernelContext, grid: &[f64], f: &[f64]) -> Vec<f64> {
    let tw = trapezoid_weights(grid);
    grid.iter()
        .map(|&w| grid.iter().zip(&tw).zip(f).map(|((&s, t), v)| t * ctx.k1(w, s) * v).sum())
        .collect()
}

/// Evaluates `β(s) = Σ_j d_j ξ_j(s) + Σ_i c_i ∫ Z_i(w) K1(w, s) dw` at `s_out`.
pub fn eval_beta(
    ctx: &KernelContext,
    d: &DVector<f64>,
    c: &DVector<f64>,
    curves: &[FunctionalCurve],
    s_out: &[f64],
) -> Result<Vec<f64>> {
    if d.len() != ctx.order {
        return Err(Error::DimensionMismatch(format!(
            "d has {} entries, order is {}",
            d.len(),
            ctx.order
        )));
    }
    if c.len() != curves.len() {
        return Err(Error::DimensionMismatch(format!(
            "c has {} entries for {} curves",
            c.len(),
            curves.len()
        )));
    }
    if let Some(&s) = s_out.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::OutOfDomain { name: "s", value: s });
    }
    let grid = shared_grid(curves)?;
    let tw = trapezoid_weights(grid);
    // Combined curve C(w) = Σ c_i Z_i(w), pre-weighted by the trapezoid rule.
    let combined: Vec<f64> = (0..grid.len())
        .map(|g| tw[g] * curves.iter().zip(c.iter()).map(|(z, ci)| ci * z.values[g]).sum::<f64>())
        .collect();
    Ok(s_out
        .iter()
        .map(|&s| {
            let null: f64 = d.iter().enumerate().map(|(j, dj)| dj * xi(j + 1, s)).sum();
            let pen: f64 = grid.iter().zip(&combined).map(|(&w, cw)| cw * ctx.k1(w, s)).sum();
            null + pen
        })
        .collect())
}

fn gl_cache() -> &'static (Vec<f64>, Vec<f64>) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_unit(GL_NODES))
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ctx2() -> KernelContext {
        KernelContext::on_grid(2, &uniform_grid(101)).unwrap()
    }

    /// Composite Simpson rule, used as an independent quadrature oracle.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut s = f(a) + f(b);
        for k in 1..panels {
            let x = a + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn k1_oracle(m: usize, w: f64, s: f64) -> f64 {
        let g = |x: f64, u: f64| if x >= u { (x - u).powi(m as i32 - 1) / factorial(m - 1) } else { 0.0 };
        simpson(|u| g(w, u) * g(s, u), 0.0, w.min(s).max(1e-300), 2000)
    }

    #[test]
    fn null_basis_values() {
        assert_eq!(null_basis_eval(2, 1, 0.7).unwrap(), 1.0);
        assert_eq!(null_basis_eval(2, 2, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(null_basis_eval(3, 3, 1.0).unwrap(), 0.5);
        assert!(matches!(null_basis_eval(2, 3, 0.5), Err(Error::IndexOutOfRange { .. })));
        assert!(null_basis_eval(2, 0, 0.5).is_err());
    }

    #[test]
    fn k1_closed_form_matches_quadrature() {
        let ctx = ctx2();
        assert_abs_diff_eq!(k1_eval(&ctx, 1.0, 1.0).unwrap(), 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k1_oracle(2, 1.0, 1.0), 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(k1_eval(&ctx, 0.0, 0.5).unwrap(), 0.0);
        // ∫₀^½ (½ - u)(1 - u) du = 5/48
        let v = k1_eval(&ctx, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(v, k1_oracle(2, 0.5, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 5.0 / 48.0, epsilon = 1e-14);
        assert!(k1_eval(&ctx, 1.2, 0.5).is_err());
        assert!(k1_eval(&ctx, 0.5, -0.1).is_err());
    }

    #[test]
    fn k1_higher_order_uses_quadrature() {
        for m in [1usize, 3, 4] {
            let ctx = KernelContext::gauss_legendre(m, 32).unwrap();
            for &(w, s) in &[(0.3, 0.9), (1.0, 1.0), (0.75, 0.2)] {
                let got = ctx.k1(w, s);
                assert_abs_diff_eq!(got, k1_oracle(m, w, s), epsilon = 1e-9);
                assert_abs_diff_eq!(got, ctx.k1(s, w), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(GL_NODES);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(20)).sum();
        assert_abs_diff_eq!(i, 1.0 / 21.0, epsilon = 1e-13);
    }

    #[test]
    fn integrate_curve_examples() {
        let g11 = uniform_grid(11);
        let one = FunctionalCurve::from_fn(g11.clone(), |_| 1.0).unwrap();
        assert_abs_diff_eq!(integrate_curve(&one, None).unwrap(), 1.0, epsilon = 1e-15);
        let g101 = uniform_grid(101);
        let lin = FunctionalCurve::from_fn(g101.clone(), |s| s).unwrap();
        assert_abs_diff_eq!(integrate_curve(&lin, None).unwrap(), 0.5, epsilon = 1e-12);
        let zero = FunctionalCurve::from_fn(g101.clone(), |_| 0.0).unwrap();
        let wt = FunctionalCurve::from_fn(g101, |s| (3.0 * s).exp()).unwrap();
        assert_eq!(integrate_curve(&zero, Some(&wt)).unwrap(), 0.0);
        assert!(matches!(integrate_curve(&one, Some(&wt)), Err(Error::GridMismatch)));
    }

    #[test]
    fn trapezoid_is_second_order() {
        let f = |s: f64| (2.0 * s).sin() + s * s;
        let exact = (1.0 - 2f64.cos()) / 2.0 + 1.0 / 3.0;
        let mut prev = None;
        for pts in [11usize, 21, 41, 81] {
            let c = FunctionalCurve::from_fn(uniform_grid(pts), f).unwrap();
            let err = (integrate_curve(&c, None).unwrap() - exact).abs();
            if let Some(p) = prev {
                assert!(p / err >= 3.5, "ratio {}", p / err);
            }
            prev = Some(err);
        }
    }

    #[test]
    fn curve_validation() {
        let g = uniform_grid(5);
        assert!(FunctionalCurve::new(g.clone(), vec![0.0; 4]).is_err());
        assert!(FunctionalCurve::new(g.clone(), vec![0.0, 1.0, f64::NAN, 0.0, 0.0]).is_err());
        let bad: Arc<[f64]> = vec![0.0, 0.5, 0.4, 1.0].into();
        assert!(FunctionalCurve::new(bad, vec![0.0; 4]).is_err());
        let short: Arc<[f64]> = vec![0.1, 1.0].into();
        assert!(FunctionalCurve::new(short, vec![0.0; 2]).is_err());
        assert!(KernelContext::new(0, vec![0.5], vec![1.0]).is_err());
        assert!(KernelContext::new(2, vec![0.5], vec![0.9]).is_err());
    }

    #[test]
    fn gram_for_constant_curve() {
        let ctx = ctx2();
        let one = FunctionalCurve::from_fn(uniform_grid(101), |_| 1.0).unwrap();
        let g = compute_gram(&ctx, &[one]).unwrap();
        assert_abs_diff_eq!(g.b[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.b[(1, 0)], 0.5, epsilon = 1e-12);
        // Z̃(u) = (1-u)²/2, Q = ∫ (1-u)⁴/4 du
        let oracle = simpson(|u| (1.0 - u).powi(4) / 4.0, 0.0, 1.0, 200);
        assert_abs_diff_eq!(oracle, 0.05, epsilon = 1e-9);
        assert_abs_diff_eq!(g.q[(0, 0)], oracle, epsilon = 1e-4);
    }

    #[test]
    fn gram_for_zero_curve_and_errors() {
        let ctx = ctx2();
        let zero = FunctionalCurve::from_fn(uniform_grid(101), |_| 0.0).unwrap();
        let g = compute_gram(&ctx, &[zero.clone()]).unwrap();
        assert!(g.b.iter().all(|&v| v == 0.0));
        assert!(g.q.iter().all(|&v| v == 0.0));
        assert!(matches!(compute_gram(&ctx, &[]), Err(Error::Empty(_))));
        let other = FunctionalCurve::from_fn(uniform_grid(51), |_| 0.0).unwrap();
        assert!(matches!(compute_gram(&ctx, &[zero, other]), Err(Error::GridMismatch)));
    }

    #[test]
    fn duplicate_curves_give_degenerate_gram() {
        let ctx = ctx2();
        let z = FunctionalCurve::from_fn(uniform_grid(101), |s| (3.0 * s).cos() + s).unwrap();
        let g = compute_gram(&ctx, &[z.clone(), z]).unwrap();
        assert_abs_diff_eq!(g.q[(0, 0)], g.q[(1, 1)], epsilon = 1e-15);
        assert_abs_diff_eq!(g.q[(0, 0)], g.q[(0, 1)], epsilon = 1e-15);
    }

    #[test]
    fn eval_beta_examples() {
        let ctx = ctx2();
        let grid = uniform_grid(101);
        let one = FunctionalCurve::from_fn(grid, |_| 1.0).unwrap();
        let s_out = [0.0, 0.3, 1.0];
        let d = DVector::from_vec(vec![1.0, 0.0]);
        let c0 = DVector::zeros(1);
        let b = eval_beta(&ctx, &d, &c0, &[one.clone()], &s_out).unwrap();
        assert!(b.iter().all(|&v| v == 1.0));
        let b = eval_beta(&ctx, &DVector::zeros(2), &c0, &[one.clone()], &s_out).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
        // ∫₀¹ K1(w, 1) dw = ∫ (w²/2 - w³/6) dw = 1/8
        let oracle = simpson(|w| k1_oracle(2, w, 1.0), 0.0, 1.0, 200);
        assert_abs_diff_eq!(oracle, 0.125, epsilon = 1e-9);
        let b = eval_beta(&ctx, &DVector::zeros(2), &DVector::from_vec(vec![1.0]), &[one.clone()], &[1.0]).unwrap();
        assert_abs_diff_eq!(b[0], oracle, epsilon = 1e-4);
        assert!(eval_beta(&ctx, &DVector::zeros(3), &c0, &[one.clone()], &s_out).is_err());
        assert!(eval_beta(&ctx, &DVector::zeros(2), &DVector::zeros(2), &[one], &s_out).is_err());
    }

    proptest! {
        #[test]
        fn k1_is_symmetric(w in 0.0f64..=1.0, s in 0.0f64..=1.0) {
            let ctx = ctx2();
            prop_assert_eq!(ctx.k1(w, s), ctx.k1(s, w));
        }

        #[test]
        fn penalty_is_psd(coefs in proptest::collection::vec(-3.0f64..3.0, 12), c in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let ctx = ctx2();
            let grid = uniform_grid(41);
            let ctx41 = KernelContext::on_grid(2, &grid).unwrap();
            let _ = ctx;
            let curves: Vec<_> = (0..4).map(|i| {
                FunctionalCurve::from_fn(grid.clone(), |s| {
                    coefs[3 * i] + coefs[3 * i + 1] * (std::f64::consts::PI * s).cos() + coefs[3 * i + 2] * s * s
                }).unwrap()
            }).collect();
            let g = compute_gram(&ctx41, &curves).unwrap();
            let c = DVector::from_vec(c);
            let quad = (c.transpose() * &g.q * &c)[(0, 0)];
            let qn = g.q.norm();
            prop_assert!(quad >= -1e-8 * c.norm_squared() * qn);
            let ev = g.q.clone().symmetric_eigenvalues();
            prop_assert!(ev.min() >= -1e-8 * qn);
            prop_assert!((&g.q - g.q.transpose()).amax() <= 1e-10);
        }
    }
}
