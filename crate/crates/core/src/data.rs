//! Interval-censored observations, the support grid of the baseline hazard,
//! and the stacked design vectors `X̃_ik = (X_i(t_k), B_i, Q_i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{FunctionalCurve, GramMatrices};

/// Bound applied to linear predictors before exponentiation.
pub const EXP_CLAMP: f64 = 700.0;

/// One subject: the event happened in `(left, right]`; `right` is `+∞` for
/// right-censored subjects and `left` is 0 for left-censored ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: String,
    pub left: f64,
    pub right: f64,
    pub x: Vec<f64>,
    pub z: FunctionalCurve,
}

impl Observation {
    pub fn new(id: impl Into<String>, left: f64, right: f64, x: Vec<f64>, z: FunctionalCurve) -> Result<Self> {
        let id = id.into();
        let bad = |reason: &str| Error::InvalidObservation {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if !(left >= 0.0) || !left.is_finite() {
            return Err(bad("left endpoint must be finite and nonnegative"));
        }
        if right.is_nan() || !(left < right) {
            return Err(bad("left endpoint must be below the right endpoint"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(bad("scalar covariates must be finite"));
        }
        Ok(Self { id, left, right, x, z })
    }

    pub fn is_right_censored(&self) -> bool {
        self.right == f64::INFINITY
    }

    pub fn is_left_censored(&self) -> bool {
        self.left == 0.0
    }
}

/// Rounds to `digits` significant decimal digits.
pub fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    if scale.is_finite() && scale > 0.0 {
        let r = (x * scale).round() / scale;
        // Re-parse the shortest representation so ties compare exactly.
        format!("{:.*e}", (digits - 1) as usize, r).parse().unwrap_or(r)
    } else {
        x
    }
}

/// Support points `0 = t_0 < t_1 < ... < t_q` of the baseline hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t: Vec<f64>,
}

impl TimeGrid {
    /// Builds the grid from `(left, right)` pairs.
    pub fn from_intervals(intervals: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pts = Vec::new();
        let mut any = false;
        for (l, r) in intervals {
            any = true;
            if l > 0.0 {
                pts.push(l);
            }
            if r.is_finite() {
                pts.push(r);
            }
        }
        if !any {
            return Err(Error::Empty("observation list"));
        }
        if pts.is_empty() {
            return Err(Error::Degenerate(
                "every subject has L = 0 and R = ∞; no finite positive endpoint".into(),
            ));
        }
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite endpoints"));
        pts.dedup();
        let mut t = Vec::with_capacity(pts.len() + 1);
        t.push(0.0);
        t.extend(pts);
        Ok(Self { t })
    }

    /// All points including `t_0 = 0`.
    pub fn points(&self) -> &[f64] {
        &self.t
    }

    /// Number of positive support points.
    pub fn q(&self) -> usize {
        self.t.len() - 1
    }

    /// Number of positive support points `t_k <= x`.
    pub fn count_le(&self, x: f64) -> usize {
        self.t[1..].partition_point(|&t| t <= x)
    }
}

pub fn build_time_grid(obs: &[Observation]) -> Result<TimeGrid> {
    TimeGrid::from_intervals(obs.iter().map(|o| (o.left, o.right)))
}

/// Block sizes of the concatenated parameter `ζ = (α, d, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub p: usize,
    pub m: usize,
    pub c: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.p + self.m + self.c
    }

    pub fn c_start(&self) -> usize {
        self.p + self.m
    }
}

/// Grid positions of one subject, expressed as counts of positive support
/// points: `lo = #{t_k <= L}`, `hi = #{t_k <= R}` (absent when `R = ∞`),
/// `risk_end = #{t_k <= R*}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubjectIndex {
    pub lo: usize,
    pub hi: Option<usize>,
    pub risk_end: usize,
}

/// Everything the EM iterations need: the grid, the stacked covariates and
/// the block-diagonal penalty `Q̃`.
///
/// The c-block of the design may be held in a reduced basis (see
/// [`DesignSet::compress`]); `coef_map` then maps working c-coefficients back
/// to representer coefficients.
#[derive(Debug, Clone)]
pub struct DesignSet {
    ids: Vec<String>,
    left: Vec<f64>,
    right: Vec<f64>,
    index: Vec<SubjectIndex>,
    grid: TimeGrid,
    layout: Layout,
    xtil: DMatrix<f64>,
    scalar_path: Option<Vec<DMatrix<f64>>>,
    penalty: DMatrix<f64>,
    coef_map: Option<DMatrix<f64>>,
}

impl DesignSet {
    /// Assembles a design from raw parts. `xtil` is `n × layout.dim()` and
    /// `penalty` is `dim × dim`.
    pub fn from_parts(
        ids: Vec<String>,
        intervals: &[(f64, f64)],
        grid: TimeGrid,
        layout: Layout,
        xtil: DMatrix<f64>,
        penalty: DMatrix<f64>,
    ) -> Result<Self> {
        let n = intervals.len();
        if ids.len() != n || xtil.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} intervals, {} ids, {} design rows",
                n,
                ids.len(),
                xtil.nrows()
            )));
        }
        if xtil.ncols() != layout.dim() || penalty.shape() != (layout.dim(), layout.dim()) {
            return Err(Error::DimensionMismatch("design width does not match layout".into()));
        }
        let mut index = Vec::with_capacity(n);
        for (id, &(l, r)) in ids.iter().zip(intervals) {
            if !(l >= 0.0 && l < r) {
                return Err(Error::InvalidObservation {
                    id: id.clone(),
                    reason: "requires 0 <= L < R".into(),
                });
            }
            let lo = grid.count_le(l);
            let hi = r.is_finite().then(|| grid.count_le(r));
            if (l > 0.0 && grid.t[lo] != l) || hi.is_some_and(|h| grid.t[h] != r) {
                return Err(Error::DimensionMismatch(format!("endpoints of {id} missing from the time grid")));
            }
            index.push(SubjectIndex {
                lo,
                hi,
                risk_end: hi.unwrap_or(lo),
            });
        }
        Ok(Self {
            ids,
            left: intervals.iter().map(|p| p.0).collect(),
            right: intervals.iter().map(|p| p.1).collect(),
            index,
            grid,
            layout,
            xtil,
            scalar_path: None,
            penalty,
            coef_map: None,
        })
    }

    /// Replaces the scalar block with per-grid-point values: `path[k]` is the
    /// `n × p` matrix of `X_i(t_{k+1})`.
    pub fn with_scalar_path(mut self, path: Vec<DMatrix<f64>>) -> Result<Self> {
        if path.len() != self.q() || path.iter().any(|m| m.shape() != (self.n(), self.layout.p)) {
            return Err(Error::DimensionMismatch("scalar path must be q matrices of n × p".into()));
        }
        self.scalar_path = Some(path);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn q(&self) -> usize {
        self.grid.q()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn index(&self) -> &[SubjectIndex] {
        &self.index
    }

    /// `R*_i = R_i` when finite, else `L_i`.
    pub fn rstar(&self, i: usize) -> f64 {
        if self.right[i].is_finite() {
            self.right[i]
        } else {
            self.left[i]
        }
    }

    pub fn xtil(&self) -> &DMatrix<f64> {
        &self.xtil
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn is_time_constant(&self) -> bool {
        self.scalar_path.is_none()
    }

    /// `X̃_ik` with `k` a zero-based index into the positive grid points.
    pub fn row(&self, i: usize, k: usize) -> DVector<f64> {
        let mut v: DVector<f64> = self.xtil.row(i).transpose();
        if let Some(path) = &self.scalar_path {
            for j in 0..self.layout.p {
                v[j] = path[k][(i, j)];
            }
        }
        v
    }

    /// `ζᵀ Q̃ ζ`, equal to `cᵀ Q c` in representer coordinates.
    pub fn penalty_value(&self, zeta: &DVector<f64>) -> f64 {
        let s = self.layout.c_start();
        let c = zeta.rows(s, self.layout.c);
        let pq = self.penalty.view((s, s), (self.layout.c, self.layout.c));
        c.dot(&(pq * c))
    }

    /// Linear predictors `ζᵀ X̃_ik`, clamped to `±EXP_CLAMP`.
    pub fn linear_predictor(&self, zeta: &DVector<f64>) -> LinearPredictor {
        let mut clamps = 0;
        let mut clamp = |v: f64| {
            if v.abs() > EXP_CLAMP {
                clamps += 1;
                v.clamp(-EXP_CLAMP, EXP_CLAMP)
            } else {
                v
            }
        };
        let raw = &self.xtil * zeta;
        match &self.scalar_path {
            None => {
                let base: Vec<f64> = raw.iter().map(|&v| clamp(v)).collect();
                LinearPredictor { base, varying: None, clamps }
            }
            Some(path) => {
                let p = self.layout.p;
                let alpha = zeta.rows(0, p);
                let fixed = &raw - self.xtil.columns(0, p) * alpha;
                let mut varying = DMatrix::zeros(self.n(), self.q());
                for (k, xk) in path.iter().enumerate() {
                    let col = &fixed + xk * alpha;
                    for i in 0..self.n() {
                        varying[(i, k)] = clamp(col[i]);
                    }
                }
                let base = raw.iter().map(|v| v.clamp(-EXP_CLAMP, EXP_CLAMP)).collect();
                LinearPredictor {
                    base,
                    varying: Some(varying),
                    clamps,
                }
            }
        }
    }

    /// Reduces the c-block to the numerically nonzero eigen-directions of
    /// `Q`: with `Q = U D Uᵀ`, the working coefficients are
    /// `b = D^{1/2} Uᵀ c`, the design block becomes `U D^{1/2}` and the
    /// penalty becomes `‖b‖²`. Directions with eigenvalue below
    /// `rel_tol · max eigenvalue` carry neither likelihood nor penalty
    /// information and are dropped.
    pub fn compress(&self, rel_tol: f64) -> DesignSet {
        let Layout { p, m, c } = self.layout;
        if c == 0 || self.coef_map.is_some() {
            return self.clone();
        }
        let s = p + m;
        let q = self.penalty.view((s, s), (c, c)).clone_owned();
        let eig = q.symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let mut keep: Vec<usize> = (0..c).filter(|&j| top > 0.0 && eig.eigenvalues[j] > rel_tol * top).collect();
        keep.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let r = keep.len();
        let mut u = DMatrix::zeros(c, r);
        let mut map = DMatrix::zeros(c, r);
        for (col, &j) in keep.iter().enumerate() {
            let ev = eig.eigenvalues[j];
            let sq = ev.sqrt();
            for row in 0..c {
                let uij = eig.eigenvectors[(row, j)];
                u[(row, col)] = uij;
                map[(row, col)] = uij / sq;
            }
        }
        let root = DMatrix::from_diagonal(&DVector::from_iterator(r, keep.iter().map(|&j| eig.eigenvalues[j].sqrt())));
        // Rows of the Q block are Q_iᵀ; Q_iᵀ c = (U D^{1/2})_i b.
        let block = &u * root;
        let layout = Layout { p, m, c: r };
        let mut xtil = DMatrix::zeros(self.n(), layout.dim());
        xtil.columns_mut(0, s).copy_from(&self.xtil.columns(0, s));
        // Design rows hold Q_i = column i of Q; in working coordinates that is row i of U D^{1/2}.
        xtil.columns_mut(s, r).copy_from(&block);
        let mut penalty = DMatrix::zeros(layout.dim(), layout.dim());
        for j in 0..r {
            penalty[(s + j, s + j)] = 1.0;
        }
        DesignSet {
            ids: self.ids.clone(),
            left: self.left.clone(),
            right: self.right.clone(),
            index: self.index.clone(),
            grid: self.grid.clone(),
            layout,
            xtil,
            scalar_path: self.scalar_path.clone(),
            penalty,
            coef_map: Some(map),
        }
    }

    /// Maps a working parameter to representer coordinates `(α, d, c)`.
    pub fn full_zeta(&self, zeta: &DVector<f64>) -> DVector<f64> {
        match &self.coef_map {
            None => zeta.clone(),
            Some(map) => {
                let s = self.layout.c_start();
                let c = map * zeta.rows(s, self.layout.c);
                let mut out = DVector::zeros(s + c.len());
                out.rows_mut(0, s).copy_from(&zeta.rows(0, s));
                out.rows_mut(s, c.len()).copy_from(&c);
                out
            }
        }
    }

    /// Expresses a linear map on representer coordinates in working
    /// coordinates: returns `A T` where `ζ_full = T ζ_working`.
    pub fn to_working(&self, a_full: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.coef_map {
            None => a_full.clone(),
            Some(map) => {
                let s = self.layout.c_start();
                let mut out = DMatrix::zeros(a_full.nrows(), self.dim());
                out.columns_mut(0, s).copy_from(&a_full.columns(0, s));
                let tail = a_full.columns(s, map.nrows()) * map;
                out.columns_mut(s, self.layout.c).copy_from(&tail);
                out
            }
        }
    }

    /// Keeps the listed subjects (in order), retaining grid and columns.
    pub fn subset(&self, keep: &[usize]) -> DesignSet {
        let mut xtil = DMatrix::zeros(keep.len(), self.dim());
        for (r, &i) in keep.iter().enumerate() {
            xtil.row_mut(r).copy_from(&self.xtil.row(i));
        }
        let scalar_path = self.scalar_path.as_ref().map(|path| {
            path.iter()
                .map(|m| DMatrix::from_fn(keep.len(), m.ncols(), |r, j| m[(keep[r], j)]))
                .collect()
        });
        DesignSet {
            ids: keep.iter().map(|&i| self.ids[i].clone()).collect(),
            left: keep.iter().map(|&i| self.left[i]).collect(),
            right: keep.iter().map(|&i| self.right[i]).collect(),
            index: keep.iter().map(|&i| self.index[i]).collect(),
            grid: self.grid.clone(),
            layout: self.layout,
            xtil,
            scalar_path,
            penalty: self.penalty.clone(),
            coef_map: self.coef_map.clone(),
        }
    }
}

/// Linear predictors for every subject (and grid point, when the scalar
/// covariates vary in time).
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    base: Vec<f64>,
    varying: Option<DMatrix<f64>>,
    pub clamps: usize,
}

impl LinearPredictor {
    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        match &self.varying {
            None => self.base[i],
            Some(v) => v[(i, k)],
        }
    }

    pub fn is_time_constant(&self) -> bool {
        self.varying.is_none()
    }

    /// Time-constant predictor of subject `i`.
    pub fn subject(&self, i: usize) -> f64 {
        self.base[i]
    }
}

/// Assembles `X̃_ik = (x_i, B_i, Q_i)` for time-constant scalar covariates.
pub fn build_design(obs: &[Observation], gram: &GramMatrices, grid: &TimeGrid) -> Result<DesignSet> {
    let n = obs.len();
    if gram.b.ncols() != n || gram.q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "{} observations but Gram matrices built from {} curves",
            n,
            gram.q.ncols()
        )));
    }
    let p = obs.first().map(|o| o.x.len()).unwrap_or(0);
    if let Some(o) = obs.iter().find(|o| o.x.len() != p) {
        return Err(Error::DimensionMismatch(format!("subject {} has {} scalar covariates, expected {p}", o.id, o.x.len())));
    }
    let m = gram.b.nrows();
    let layout = Layout { p, m, c: n };
    let xtil = DMatrix::from_fn(n, layout.dim(), |i, j| {
        if j < p {
            obs[i].x[j]
        } else if j < p + m {
            gram.b[(j - p, i)]
        } else {
            gram.q[(j - p - m, i)]
        }
    });
    let mut penalty = DMatrix::zeros(layout.dim(), layout.dim());
    penalty.view_mut((p + m, p + m), (n, n)).copy_from(&gram.q);
    DesignSet::from_parts(
        obs.iter().map(|o| o.id.clone()).collect(),
        &obs.iter().map(|o| (o.left, o.right)).collect::<Vec<_>>(),
        grid.clone(),
        layout,
        xtil,
        penalty,
    )
}

/// Cumulative hazards `(H_i(L_i), H_i(R_i))`, with `H_i(R_i) = ∞` when `R_i = ∞`.
pub(crate) fn cumulative_hazards(design: &DesignSet, eta: &LinearPredictor, lambda: &[f64]) -> Vec<(f64, f64)> {
    let idx = design.index();
    if eta.is_time_constant() {
        let mut cum = Vec::with_capacity(lambda.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &l in lambda {
            acc += l;
            cum.push(acc);
        }
        idx.iter()
            .enumerate()
            .map(|(i, s)| {
                let e = eta.subject(i).exp();
                let hl = e * cum[s.lo];
                let hr = s.hi.map_or(f64::INFINITY, |h| e * cum[h]);
                (hl, hr)
            })
            .collect()
    } else {
        idx.iter()
            .enumerate()
            .map(|(i, s)| {
                let hl: f64 = (0..s.lo).map(|k| lambda[k] * eta.at(i, k).exp()).sum();
                let hr = s.hi.map_or(f64::INFINITY, |h| hl + (s.lo..h).map(|k| lambda[k] * eta.at(i, k).exp()).sum::<f64>());
                (hl, hr)
            })
            .collect()
    }
}

/// `log[exp(-H_L) - exp(-H_R)]`; `-∞` when the interval carries no mass.
#[inline]
pub(crate) fn interval_log_mass(hl: f64, hr: f64) -> f64 {
    if hr == f64::INFINITY {
        return -hl;
    }
    let gap = hr - hl;
    if !(gap > 0.0) {
        return f64::NEG_INFINITY;
    }
    -hl + (-(-gap).exp_m1()).ln()
}

/// Per-subject observed loglikelihood contributions (unscaled).
pub(crate) fn subject_logliks(design: &DesignSet, eta: &LinearPredictor, lambda: &[f64]) -> Vec<f64> {
    cumulative_hazards(design, eta, lambda)
        .into_iter()
        .map(|(hl, hr)| interval_log_mass(hl, hr))
        .collect()
}

/// Average observed loglikelihood and its penalized version
/// `loglik - γ cᵀ Q c`.
pub fn observed_loglik(design: &DesignSet, zeta: &DVector<f64>, lambda: &[f64], gamma: f64) -> Result<(f64, f64)> {
    check_params(design, zeta, lambda)?;
    let eta = design.linear_predictor(zeta);
    let ll = subject_logliks(design, &eta, lambda);
    if let Some(i) = ll.iter().position(|v| !v.is_finite()) {
        return Err(Error::ZeroMass { id: design.ids()[i].clone() });
    }
    let loglik = crate::stats::sorted_sum(ll) / design.n() as f64;
    Ok((loglik, loglik - gamma * design.penalty_value(zeta)))
}

pub(crate) fn check_params(design: &DesignSet, zeta: &DVector<f64>, lambda: &[f64]) -> Result<()> {
    if zeta.len() != design.dim() || lambda.len() != design.q() {
        return Err(Error::DimensionMismatch(format!(
            "zeta {} (expected {}), lambda {} (expected {})",
            zeta.len(),
            design.dim(),
            lambda.len(),
            design.q()
        )));
    }
    if lambda.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::Config("baseline jumps must be nonnegative".into()));
    }
    Ok(())
}
