//! Run configuration for `fit` and `test`. Every field has a default, and
//! the effective configuration is echoed into each report.

use std::path::Path;

use fcox::FitOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Sobolev order of the penalty.
    pub m: usize,
    /// Fixed smoothing parameter; when absent it is selected on `gamma_grid`.
    pub gamma: Option<f64>,
    /// Selection grid; when absent the default grid for the sample size.
    pub gamma_grid: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub accelerate: bool,
    pub standard_errors: bool,
    /// Cosine test functions for the global test of `β ≡ 0`; 0 skips it.
    pub test_fns: usize,
    pub h_n: Option<f64>,
    pub profile_tol: f64,
    pub level: f64,
    pub curve_points: usize,
    /// Recorded for provenance; fitting itself draws no random numbers.
    pub seed: Option<u64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            m: 2,
            gamma: None,
            gamma_grid: None,
            tol: 5e-3,
            max_iter: 5000,
            accelerate: true,
            standard_errors: true,
            test_fns: 0,
            h_n: None,
            profile_tol: 1e-7,
            level: 0.05,
            curve_points: 201,
            seed: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.m < 1 {
            bad.push("m must be at least 1".to_string());
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                bad.push("gamma must be positive".into());
            }
        }
        if let Some(grid) = &self.gamma_grid {
            if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
                bad.push("gamma_grid must be a nonempty list of positive numbers".into());
            }
        }
        if !(self.tol > 0.0) || !(self.profile_tol > 0.0) {
            bad.push("tolerances must be positive".into());
        }
        if self.max_iter < 1 {
            bad.push("max_iter must be at least 1".into());
        }
        if let Some(h) = self.h_n {
            if !(h > 0.0) || !h.is_finite() {
                bad.push("h_n must be positive".into());
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            bad.push("level must lie in (0, 1)".into());
        }
        if self.curve_points < 2 {
            bad.push("curve_points must be at least 2".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad.join("; ")))
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions { tol: self.tol, max_iter: self.max_iter, accelerate: self.accelerate, pll_tol: 0.0 }
    }

    pub fn profile_options(&self) -> FitOptions {
        FitOptions { tol: 0.0, max_iter: self.max_iter.max(20_000), accelerate: self.accelerate, pll_tol: self.profile_tol }
    }
}

/// Parses a JSON object into `T`, naming unknown or mistyped fields.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text)
}
