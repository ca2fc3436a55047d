use std::path::Path;

use fcox::inference::default_hn;
use fcox::pipeline::cumulative_hazard_at;
use fcox::simulation::{gen_dataset, run_study, CensoringMix, Dgp, SimConfig, SimSummary};
use fcox::{
    alpha_covariance, cosine_test_functions, default_gamma_grid, fit, global_beta_test, observed_loglik, prepare, select_gamma, FitState,
    Prepared,
};

use crate::config::FitConfig;
use crate::error::{CliError, Result};
use crate::io::Dataset;
use crate::report::*;

/// Test functions used by `test` when the configuration asks for none.
pub const DEFAULT_TEST_FNS: usize = 3;

struct Fitted {
    prep: Prepared,
    gamma: f64,
    state: FitState,
    selection: Option<GammaSelection>,
    data: DataSummary,
}

fn fit_dataset(ds: &Dataset, cfg: &FitConfig) -> Result<Fitted> {
    cfg.validate()?;
    let prep = prepare(&ds.observations, cfg.m)?;
    let opts = cfg.fit_options();
    let n = ds.observations.len();
    let (gamma, state, selection) = match cfg.gamma {
        Some(g) => (g, fit(&prep.design, g, &opts)?, None),
        None => {
            let grid = cfg.gamma_grid.clone().unwrap_or_else(|| default_gamma_grid(n));
            let rep = select_gamma(&prep.design, &grid, &opts)?;
            (rep.selected, rep.selected_fit, Some(GammaSelection { grid: rep.gamma_grid, scores: rep.scores }))
        }
    };
    let data = DataSummary {
        n,
        p: ds.p(),
        grid_points: ds.grid.len(),
        q: prep.design.q(),
        censoring: CensoringMix::of(&ds.observations),
    };
    Ok(Fitted { prep, gamma, state, selection, data })
}

fn convergence(st: &FitState) -> Convergence {
    Convergence { converged: st.converged, iterations: st.iter, clamp_count: st.clamp_count, worst_descent: st.worst_descent() }
}

fn run_test(f: &Fitted, cfg: &FitConfig, count: usize) -> Result<TestBlock> {
    let tests = cosine_test_functions(f.prep.curves[0].grid(), count)?;
    let h_n = cfg.h_n.unwrap_or_else(|| default_hn(f.data.n));
    let rep = global_beta_test(&f.prep.design, f.gamma, &f.state, &f.prep.ctx, &f.prep.curves, &tests, h_n, &cfg.profile_options())?;
    Ok(TestBlock::from_report(&rep, cfg.level))
}

/// Report plus the two curve files written next to it.
pub struct FitOutput {
    pub report: FitReport,
    pub beta_csv: String,
    pub hazard_csv: String,
}

pub const BETA_FILE: &str = "beta.csv";
pub const HAZARD_FILE: &str = "cumulative_hazard.csv";
pub const FIT_REPORT_FILE: &str = "fit.json";
pub const TEST_REPORT_FILE: &str = "test.json";

pub fn cmd_fit(ds: &Dataset, cfg: &FitConfig) -> Result<FitOutput> {
    let f = fit_dataset(ds, cfg)?;
    let design = &f.prep.design;
    let st = &f.state;
    let (loglik, penalized_loglik) = observed_loglik(design, &st.zeta, &st.lambda, f.gamma)?;
    let est: Vec<f64> = f.prep.alpha(&st.zeta).iter().cloned().collect();
    let cov = if cfg.standard_errors {
        let h_n = cfg.h_n.unwrap_or_else(|| default_hn(f.data.n));
        Some(alpha_covariance(design, f.gamma, st, h_n, &cfg.profile_options())?)
    } else {
        None
    };
    let alpha = est
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let se = cov.as_ref().map(|c| c.se[j]).filter(|s| s.is_finite());
            AlphaEstimate {
                name: format!("x{}", j + 1),
                estimate: a,
                se,
                ci_lower: se.map(|s| a - Z95 * s),
                ci_upper: se.map(|s| a + Z95 * s),
            }
        })
        .collect();
    let alpha_covariance = cov.as_ref().map(|c| CovarianceBlock {
        h_n: c.h_n,
        covariance: matrix_rows(&c.covariance),
        positive_definite: c.positive_definite,
        condition: c.condition,
    });
    let test = if cfg.test_fns > 0 { Some(run_test(&f, cfg, cfg.test_fns)?) } else { None };
    let full = design.full_zeta(&st.zeta);
    let l = design.layout();
    let s_out: Vec<f64> = (0..cfg.curve_points).map(|i| i as f64 / (cfg.curve_points - 1) as f64).collect();
    let beta = f.prep.beta_curve(&st.zeta, &s_out)?;
    let points = design.grid().points();
    let cum = cumulative_hazard_at(points, &st.lambda, &points[1..]);
    let report = FitReport {
        tool: tool_name(),
        config: cfg.clone(),
        data: f.data.clone(),
        gamma: f.gamma,
        gamma_selection: f.selection.clone(),
        convergence: convergence(st),
        loglik,
        penalized_loglik,
        alpha,
        alpha_covariance,
        d: full.rows(l.p, l.m).iter().cloned().collect(),
        c: full.rows(l.p + l.m, l.c).iter().cloned().collect(),
        test,
        files: vec![BETA_FILE.into(), HAZARD_FILE.into()],
    };
    Ok(FitOutput {
        report,
        beta_csv: csv_table(&["s", "beta"], &[&s_out, &beta]),
        hazard_csv: csv_table(&["t", "jump", "cumulative_hazard"], &[&points[1..], &st.lambda, &cum]),
    })
}

pub fn cmd_test(ds: &Dataset, cfg: &FitConfig) -> Result<TestReport> {
    let mut cfg = cfg.clone();
    if cfg.test_fns == 0 {
        cfg.test_fns = DEFAULT_TEST_FNS;
    }
    let f = fit_dataset(ds, &cfg)?;
    let test = run_test(&f, &cfg, cfg.test_fns)?;
    Ok(TestReport { tool: tool_name(), config: cfg, data: f.data.clone(), gamma: f.gamma, convergence: convergence(&f.state), test })
}

/// The ω values labelling the rejection-rate columns.
pub const OMEGA_COLUMNS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

pub struct SimOutput {
    pub summary: SimSummary,
    /// Rejection rate per entry of `OMEGA_COLUMNS` when a sweep was run.
    pub sweep: Option<Vec<SimSummary>>,
}

/// Runs the study; with `omega_sweep` the global test is repeated at every
/// ω of `OMEGA_COLUMNS` with the same seed.
pub fn cmd_simulate(cfg: &SimConfig, omega_sweep: bool) -> Result<SimOutput> {
    if omega_sweep && cfg.test_fns == 0 {
        return Err(CliError::Config("an omega sweep needs test_fns > 0".into()));
    }
    let summary = run_study(cfg)?;
    let sweep = if omega_sweep {
        Some(
            OMEGA_COLUMNS
                .iter()
                .map(|&omega| {
                    if omega == cfg.omega {
                        Ok(summary.clone())
                    } else {
                        run_study(&SimConfig { omega, ..cfg.clone() }).map_err(CliError::from)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(SimOutput { summary, sweep })
}

/// Dataset of one simulated replicate, in the form `fit` reads.
pub fn simulated_dataset(cfg: &SimConfig, replicate: usize) -> Result<Dataset> {
    cfg.validate()?;
    let dgp = Dgp::new(cfg);
    let observations: Vec<_> = gen_dataset(cfg, &dgp, replicate)?.into_iter().map(|s| s.obs).collect();
    let grid = observations[0].z.grid().clone();
    Ok(Dataset { observations, grid })
}

fn fmt3(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        String::new()
    }
}

/// Bias, SE, SEE and CP per parameter, CP in percent.
pub fn table1_csv(s: &SimSummary) -> String {
    let mut out = String::from("parameter,Bias,SE,SEE,CP\n");
    for p in &s.params {
        let cp = if p.cp.is_finite() { format!("{:.1}", 100.0 * p.cp) } else { String::new() };
        out.push_str(&format!("{},{},{},{},{}\n", p.name, fmt3(p.bias), fmt3(p.se), fmt3(p.see), cp));
    }
    out
}

/// One row per study with a column per ω; cells for ω values that were not
/// run are left empty.
pub fn rejection_csv(out: &SimOutput) -> String {
    let cfg = &out.summary.config;
    let mut s = String::from("n,v");
    for w in OMEGA_COLUMNS {
        s.push_str(&format!(",ω={w}"));
    }
    s.push('\n');
    s.push_str(&format!("{},{}", cfg.n, cfg.v));
    for (j, w) in OMEGA_COLUMNS.iter().enumerate() {
        let rate = match &out.sweep {
            Some(sw) => sw[j].rejection_rate,
            None if *w == cfg.omega => out.summary.rejection_rate,
            None => None,
        };
        s.push(',');
        if let Some(r) = rate {
            s.push_str(&format!("{r:.3}"));
        }
    }
    s.push('\n');
    s
}

pub fn replicates_csv(s: &SimSummary) -> String {
    let mut out = String::from("replicate,gamma,converged,iterations,alpha1,alpha2,se1,se2,wald,p_value,left,interval,right,worst_descent\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &s.replicates {
        let se = |j: usize| opt(r.alpha_se.as_ref().map(|s| s[j]));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.replicate,
            r.gamma,
            r.converged,
            r.iterations,
            r.alpha[0],
            r.alpha[1],
            se(0),
            se(1),
            opt(r.wald_statistic),
            opt(r.p_value),
            r.censoring.left,
            r.censoring.interval,
            r.censoring.right,
            r.worst_descent
        ));
    }
    out
}

pub const SIM_FILES: [&str; 6] = ["summary.json", "table1.csv", "rejection.csv", "beta_mean.csv", "cumulative_hazard_mean.csv", "replicates.csv"];

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

pub fn write_fit(dir: &Path, out: &FitOutput) -> Result<()> {
    create_dir(dir)?;
    write(dir, FIT_REPORT_FILE, &to_json(&out.report))?;
    write(dir, BETA_FILE, &out.beta_csv)?;
    write(dir, HAZARD_FILE, &out.hazard_csv)
}

pub fn write_test(dir: &Path, rep: &TestReport) -> Result<()> {
    create_dir(dir)?;
    write(dir, TEST_REPORT_FILE, &to_json(rep))
}

pub fn write_simulation(dir: &Path, out: &SimOutput) -> Result<()> {
    create_dir(dir)?;
    let s = &out.summary;
    let json = match &out.sweep {
        None => to_json(s),
        Some(sw) => to_json(&serde_json::json!({ "summary": s, "omega_sweep": sw })),
    };
    write(dir, SIM_FILES[0], &json)?;
    write(dir, SIM_FILES[1], &table1_csv(s))?;
    write(dir, SIM_FILES[2], &rejection_csv(out))?;
    write(dir, SIM_FILES[3], &csv_table(&["s", "beta_true", "beta_mean"], &[&s.beta_grid, &s.beta_true, &s.beta_mean]))?;
    write(
        dir,
        SIM_FILES[4],
        &csv_table(&["t", "cumulative_hazard_true", "cumulative_hazard_mean"], &[&s.time_grid, &s.cum_hazard_true, &s.cum_hazard_mean]),
    )?;
    write(dir, SIM_FILES[5], &replicates_csv(s))
}
