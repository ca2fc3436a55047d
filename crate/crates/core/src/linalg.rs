//! Small dense linear-algebra helpers shared by the fitting and inference code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

/// Cholesky factor of a symmetric matrix that may need diagonal jitter.
///
/// Jitter starts at `1e-8 · trace/dim` and escalates by ×10 up to
/// `1e-2 · trace/dim`.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl SpdFactor {
    pub fn new(mat: &DMatrix<f64>) -> Result<Self> {
        if let Some(chol) = mat.clone().cholesky() {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let dim = mat.nrows().max(1) as f64;
        let mut scale = mat.trace().abs() / dim;
        if !(scale > 0.0) || !scale.is_finite() {
            scale = 1.0;
        }
        let mut rel = JITTER_START;
        while rel <= JITTER_MAX * (1.0 + 1e-12) {
            let mut m = mat.clone();
            let j = rel * scale;
            for d in 0..m.nrows() {
                m[(d, d)] += j;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(Self { chol, jitter: j });
            }
            rel *= 10.0;
        }
        Err(Error::SingularInformation {
            condition: condition_number(mat),
        })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Ratio of extreme absolute eigenvalues of the symmetric part.
pub fn condition_number(mat: &DMatrix<f64>) -> f64 {
    let sym = (mat + mat.transpose()) * 0.5;
    let ev = sym.symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormal basis for the null space of a full-row-rank `a` (`r × d`),
/// returned as a `d × (d - r)` matrix. Fails if `a` is numerically rank
/// deficient.
pub fn null_space_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, d) = a.shape();
    if r >= d {
        return Err(Error::DimensionMismatch(format!("constraint has {r} rows for {d} parameters")));
    }
    // Householder QR of [Aᵀ | I] yields a full orthogonal factor whose
    // leading r columns span range(Aᵀ).
    let mut aug = DMatrix::zeros(d, r + d);
    aug.columns_mut(0, r).copy_from(&a.transpose());
    aug.columns_mut(r, d).fill_with_identity();
    let qr = aug.qr();
    let rfac = qr.r();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let rank = (0..r).filter(|&j| rfac[(j, j)].abs() > 1e-10 * scale).count();
    if rank < r {
        return Err(Error::RankDeficient { rank, rows: r });
    }
    let q = qr.q();
    Ok(q.columns(r, d - r).clone_owned())
}
