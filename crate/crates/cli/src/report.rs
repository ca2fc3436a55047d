//! Serialized outputs of the subcommands.

use fcox::simulation::CensoringMix;
use fcox::InferenceReport;
use serde::{Deserialize, Serialize};

use crate::config::FitConfig;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub p: usize,
    pub grid_points: usize,
    /// Support points of the baseline hazard.
    pub q: usize,
    pub censoring: CensoringMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSelection {
    pub grid: Vec<f64>,
    /// Approximate leave-one-out score per grid value; `null` where the fit failed.
    pub scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceBlock {
    pub h_n: f64,
    pub covariance: Vec<Vec<f64>>,
    pub positive_definite: bool,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestBlock {
    pub test_fns: usize,
    pub rho_hat: Vec<f64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
    /// Set when the estimated covariance is singular or badly conditioned.
    pub inconclusive: bool,
    pub positive_definite: bool,
    pub condition: f64,
    pub h_n: f64,
}

impl TestBlock {
    pub fn from_report(rep: &InferenceReport, level: f64) -> Self {
        let w = rep.wald.as_ref().expect("test reports carry a statistic");
        Self {
            test_fns: rep.rho_hat.len(),
            rho_hat: rep.rho_hat.iter().cloned().collect(),
            statistic: w.statistic,
            dof: w.dof,
            p_value: w.p_value,
            level,
            reject: !w.inconclusive && w.p_value < level,
            inconclusive: w.inconclusive,
            positive_definite: rep.positive_definite,
            condition: rep.condition,
            h_n: rep.h_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub clamp_count: usize,
    pub worst_descent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tool: String,
    pub config: FitConfig,
    pub data: DataSummary,
    pub gamma: f64,
    pub gamma_selection: Option<GammaSelection>,
    pub convergence: Convergence,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub alpha: Vec<AlphaEstimate>,
    pub alpha_covariance: Option<CovarianceBlock>,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub test: Option<TestBlock>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub tool: String,
    pub config: FitConfig,
    pub data: DataSummary,
    pub gamma: f64,
    pub convergence: Convergence,
    pub test: TestBlock,
}

pub fn tool_name() -> String {
    format!("fcox {}", env!("CARGO_PKG_VERSION"))
}

pub fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Two-column-or-more CSV text with a header row and shortest round-trip numbers.
pub fn csv_table(header: &[&str], columns: &[&[f64]]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    let rows = columns.first().map_or(0, |c| c.len());
    for r in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| c[r].to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
