//! Observations to a ready-to-fit design, and back from estimates to curves.

use nalgebra::DVector;

use crate::data::{build_design, build_time_grid, DesignSet, Observation};
use crate::error::{Error, Result};
use crate::kernel::{compute_gram, eval_beta, FunctionalCurve, KernelContext};

/// Eigenvalues of `Q` below this fraction of the largest are dropped from
/// the working parametrization.
pub const COMPRESS_TOL: f64 = 1e-12;

pub struct Prepared {
    pub ctx: KernelContext,
    pub curves: Vec<FunctionalCurve>,
    pub design: DesignSet,
}

pub fn prepare(obs: &[Observation], order: usize) -> Result<Prepared> {
    let first = obs.first().ok_or(Error::Empty("observation list"))?;
    let ctx = KernelContext::on_grid(order, first.z.grid())?;
    let curves: Vec<FunctionalCurve> = obs.iter().map(|o| o.z.clone()).collect();
    let gram = compute_gram(&ctx, &curves)?;
    let grid = build_time_grid(obs)?;
    let design = build_design(obs, &gram, &grid)?.compress(COMPRESS_TOL);
    Ok(Prepared { ctx, curves, design })
}

impl Prepared {
    /// `β̂` at `s_out` for a working parameter of this design.
    pub fn beta_curve(&self, zeta: &DVector<f64>, s_out: &[f64]) -> Result<Vec<f64>> {
        let full = self.design.full_zeta(zeta);
        let l = self.design.layout();
        let m = self.ctx.order();
        let d = full.rows(l.p, m).clone_owned();
        let c = full.rows(l.p + m, self.curves.len()).clone_owned();
        eval_beta(&self.ctx, &d, &c, &self.curves, s_out)
    }

    pub fn alpha<'a>(&self, zeta: &'a DVector<f64>) -> nalgebra::DVectorView<'a, f64> {
        zeta.rows(0, self.design.layout().p)
    }
}

/// Right-continuous step function `Σ_{t_k ≤ t} λ_k` evaluated at `t_out`.
pub fn cumulative_hazard_at(grid: &[f64], lambda: &[f64], t_out: &[f64]) -> Vec<f64> {
    // `grid` holds t_0 = 0 followed by t_1..t_q.
    let cum: Vec<f64> = std::iter::once(0.0)
        .chain(lambda.iter().scan(0.0, |a, &l| {
            *a += l;
            Some(*a)
        }))
        .collect();
    t_out
        .iter()
        .map(|&t| {
            let k = grid[1..].partition_point(|&g| g <= t);
            cum[k]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::fit;
    use crate::kernel::uniform_grid;
    use crate::FitOptions;

    #[test]
    fn step_function_lookup() {
        let grid = [0.0, 1.0, 2.0, 3.0];
        let lam = [0.5, 0.0, 1.0];
        assert_eq!(cumulative_hazard_at(&grid, &lam, &[0.0, 0.99, 1.0, 2.5, 3.0, 9.0]), vec![0.0, 0.0, 0.5, 0.5, 1.5, 1.5]);
    }

    #[test]
    fn compression_preserves_the_fit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let grid = uniform_grid(21);
        let obs: Vec<Observation> = (0..25)
            .map(|i| {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                let z = FunctionalCurve::from_fn(grid.clone(), |s| a + b * s + (a * b) * s * s).unwrap();
                let l = rng.gen_range(0.0..1.0);
                let r = if i % 4 == 0 { f64::INFINITY } else { l + rng.gen_range(0.2..1.0) };
                Observation::new(format!("s{i}"), if i % 3 == 0 { 0.0 } else { l }, r, vec![a], z).unwrap()
            })
            .collect();
        let prep = prepare(&obs, 2).unwrap();
        let ctx = KernelContext::on_grid(2, &grid).unwrap();
        let gram = compute_gram(&ctx, &prep.curves).unwrap();
        let full = build_design(&obs, &gram, &build_time_grid(&obs).unwrap()).unwrap();
        assert!(prep.design.dim() < full.dim());
        let opts = FitOptions { tol: 0.0, max_iter: 200_000, pll_tol: 1e-13, ..FitOptions::default() };
        let gamma = 0.01;
        let a = fit(&prep.design, gamma, &opts).unwrap();
        let b = fit(&full, gamma, &opts).unwrap();
        assert!((a.pll() - b.pll()).abs() < 1e-8, "{} vs {}", a.pll(), b.pll());
        let s: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let ba = prep.beta_curve(&a.zeta, &s).unwrap();
        let l = full.layout();
        let bb = eval_beta(&ctx, &b.zeta.rows(l.p, 2).clone_owned(), &b.zeta.rows(l.p + 2, l.c).clone_owned(), &prep.curves, &s).unwrap();
        for (x, y) in ba.iter().zip(&bb) {
            assert!((x - y).abs() < 1e-4 * y.abs().max(1.0), "{x} vs {y}");
        }
        assert!((a.zeta[0] - b.zeta[0]).abs() < 1e-4 * b.zeta[0].abs(), "{} vs {}", a.zeta[0], b.zeta[0]);
    }
}
