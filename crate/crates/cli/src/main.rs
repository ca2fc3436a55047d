use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcox::simulation::{GammaPolicy, SimConfig};
use fcox_cli::commands::{self, SimOutput};
use fcox_cli::config::{parse_json, read_json};
use fcox_cli::{read_dataset, CliError, FitConfig, Result};

#[derive(Parser)]
#[command(name = "fcox", version, about = "Functional Cox model for interval-censored data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and write a JSON report with beta and baseline hazard curves.
    Fit(DataArgs),
    /// Wald test of a null functional effect.
    Test(DataArgs),
    /// Monte Carlo study on simulated data.
    Simulate(SimArgs),
}

#[derive(Args)]
struct Common {
    /// Fixed smoothing parameter (skips selection).
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated smoothing parameters to select from.
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    /// Sobolev order of the penalty.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Number of cosine test functions for the global test.
    #[arg(long = "test-fns", value_name = "L")]
    test_fns: Option<usize>,
    /// Step of the numerical profile-likelihood Hessian.
    #[arg(long)]
    hn: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "fcox-out")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV with columns id, L, R, x1..xp, z_0..z_{G-1}.
    data: PathBuf,
    /// Grid sidecar; defaults to the CSV path with extension `.grid.json`.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimArgs {
    /// JSON study configuration.
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    v: Option<u32>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Repeat the study at every ω in 0, 0.1, ..., 0.5.
    #[arg(long)]
    omega_sweep: bool,
    /// Write the dataset of replicate 0 as `data.csv` (with its grid
    /// sidecar) instead of running the study.
    #[arg(long)]
    emit_data: bool,
    #[command(flatten)]
    common: Common,
}

fn fit_config(a: &DataArgs) -> Result<FitConfig> {
    let mut cfg: FitConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    let c = &a.common;
    if c.gamma.is_some() && c.gamma_grid.is_some() {
        return Err(CliError::Config("--gamma and --gamma-grid are mutually exclusive".into()));
    }
    if let Some(g) = c.gamma {
        cfg.gamma = Some(g);
        cfg.gamma_grid = None;
    }
    if let Some(g) = &c.gamma_grid {
        cfg.gamma = None;
        cfg.gamma_grid = Some(g.clone());
    }
    cfg.m = c.m.unwrap_or(cfg.m);
    cfg.tol = c.tol.unwrap_or(cfg.tol);
    cfg.max_iter = c.max_iter.unwrap_or(cfg.max_iter);
    cfg.test_fns = c.test_fns.unwrap_or(cfg.test_fns);
    cfg.h_n = c.hn.or(cfg.h_n);
    cfg.seed = c.seed.or(cfg.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn sim_config(a: &SimArgs) -> Result<SimConfig> {
    let text = match &a.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => "{}".to_string(),
    };
    let raw: serde_json::Value = parse_json(&text)?;
    let has_seed = raw.get("seed").is_some();
    let mut cfg: SimConfig = parse_json(&text)?;
    let c = &a.common;
    if c.gamma.is_some() && c.gamma_grid.is_some() {
        return Err(CliError::Config("--gamma and --gamma-grid are mutually exclusive".into()));
    }
    if let Some(g) = c.gamma {
        cfg.gamma = GammaPolicy::Fixed { gamma: g };
    }
    if let Some(g) = &c.gamma_grid {
        cfg.gamma = GammaPolicy::Select { grid: Some(g.clone()) };
    }
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.v = a.v.unwrap_or(cfg.v);
    cfg.omega = a.omega.unwrap_or(cfg.omega);
    cfg.replicates = a.replicates.unwrap_or(cfg.replicates);
    cfg.m = c.m.unwrap_or(cfg.m);
    cfg.tol = c.tol.unwrap_or(cfg.tol);
    cfg.max_iter = c.max_iter.unwrap_or(cfg.max_iter);
    cfg.test_fns = c.test_fns.unwrap_or(cfg.test_fns);
    cfg.h_n = c.hn.or(cfg.h_n);
    cfg.seed = match c.seed {
        Some(s) => s,
        // The generated seed is recorded in the summary's config block.
        None if !has_seed => rand::random(),
        None => cfg.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn warn_unconverged(converged: bool, iterations: usize) {
    if !converged {
        eprintln!("warning: EM stopped at the iteration limit ({iterations}) before meeting the tolerance");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            set_threads(a.common.threads)?;
            let cfg = fit_config(&a)?;
            let ds = read_dataset(&a.data, a.grid.as_deref())?;
            let out = commands::cmd_fit(&ds, &cfg)?;
            warn_unconverged(out.report.convergence.converged, out.report.convergence.iterations);
            commands::write_fit(&a.common.out, &out)?;
            let r = &out.report;
            println!("n = {}, gamma = {:e}, penalized loglik = {:.6}", r.data.n, r.gamma, r.penalized_loglik);
            for al in &r.alpha {
                match al.se {
                    Some(se) => println!("{}: {:.4} (se {:.4})", al.name, al.estimate, se),
                    None => println!("{}: {:.4}", al.name, al.estimate),
                }
            }
            print_written(&a.common.out, commands::FIT_REPORT_FILE);
        }
        Command::Test(a) => {
            set_threads(a.common.threads)?;
            let cfg = fit_config(&a)?;
            let ds = read_dataset(&a.data, a.grid.as_deref())?;
            let rep = commands::cmd_test(&ds, &cfg)?;
            warn_unconverged(rep.convergence.converged, rep.convergence.iterations);
            commands::write_test(&a.common.out, &rep)?;
            let t = &rep.test;
            println!("Wald = {:.4}, dof = {}, p = {:.4e}{}", t.statistic, t.dof, t.p_value, if t.inconclusive { " (inconclusive)" } else { "" });
            print_written(&a.common.out, commands::TEST_REPORT_FILE);
        }
        Command::Simulate(a) => {
            set_threads(a.common.threads)?;
            let cfg = sim_config(&a)?;
            if a.emit_data {
                let ds = commands::simulated_dataset(&cfg, 0)?;
                std::fs::create_dir_all(&a.common.out).map_err(|e| CliError::io(&a.common.out, e))?;
                let path = a.common.out.join("data.csv");
                fcox_cli::write_dataset(&ds, &path, None)?;
                println!("wrote {} (seed {})", path.display(), cfg.seed);
                return Ok(());
            }
            let out: SimOutput = commands::cmd_simulate(&cfg, a.omega_sweep)?;
            commands::write_simulation(&a.common.out, &out)?;
            print!("{}", commands::table1_csv(&out.summary));
            if out.summary.rejection_rate.is_some() {
                print!("{}", commands::rejection_csv(&out));
            }
            print_written(&a.common.out, commands::SIM_FILES[0]);
        }
    }
    Ok(())
}

fn print_written(dir: &Path, main: &str) {
    println!("wrote {}", dir.join(main).display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
