//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a bound check failed, 2 usage, I/O or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::bounds::{bounds_report, step_ceiling, BoundsQuery, BoundsReport};
use crate::config::{base_dir_of, load_fixture, ConfigFile};
use crate::engine::{run, RunConfig};
use crate::error::{Error, Result};
use crate::model::{BoxDomain, RegressionProblem, BUNDLED_FIXTURE_NAME};
use crate::redundancy::epsilon_grid;

mod stochastic;
mod sweep;
mod table;

pub use stochastic::{stochastic_check, CheckpointResult, StochasticReport};
pub use sweep::{run_suite, ExperimentSuite, SweepCell};
pub use table::{results_table, ResultsTable, TableRow, DIST_TOLERANCE, RANDOM_FAULT_STD};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BOUND_FAILURE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "resilient-gd",
    version,
    about = "Byzantine- and straggler-resilient gradient descent toolkit"
)]
pub struct Cli {
    /// Base seed. Commands that need several seeds use seed, seed+1, ...
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files. Without it, results go to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Bundled dataset to use instead of a CSV file.
    #[arg(long, global = true, value_name = "NAME")]
    pub fixture: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Redundancy ε for every (f, r) up to the given maxima.
    Epsilon {
        /// Dataset CSV with columns a_1..a_d,b,agent_id.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        f_max: usize,
        #[arg(long, default_value_t = 2)]
        r_max: usize,
    },
    /// Convergence constants for one (f, r).
    Bounds {
        /// Dataset CSV with columns a_1..a_d,b,agent_id.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of Byzantine agents.
        #[arg(short, long)]
        f: usize,
        /// Number of stragglers ignored per iteration.
        #[arg(short, long)]
        r: usize,
        /// Staleness window for the stale-sum radius.
        #[arg(long)]
        tau: Option<usize>,
        /// Initial step of the harmonic schedule, used by the stale radius.
        #[arg(long, default_value_t = 1.5)]
        eta0: f64,
        /// Constant step for ρ and M̄.
        #[arg(long, conflicts_with = "eta_fraction")]
        eta: Option<f64>,
        /// Constant step as a fraction of η̄.
        #[arg(long)]
        eta_fraction: Option<f64>,
        /// Gradient noise level; enables ρ and M̄.
        #[arg(long)]
        sigma: Option<f64>,
        /// Domain is [-w, w]^d.
        #[arg(long, default_value_t = 1000.0)]
        half_width: f64,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Runs one configuration and writes its trajectory.
    Run {
        /// JSON run config.
        config: PathBuf,
    },
    /// Reproduces the results table across faults, stragglers and seeds.
    Table {
        /// Seeds per cell.
        #[arg(long, default_value_t = 4)]
        seeds: usize,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
    },
    /// Compares Monte Carlo error against the stochastic envelope.
    StochasticCheck {
        /// JSON run config with a constant step (or use --eta-fraction).
        config: PathBuf,
        /// Monte Carlo repetitions.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        /// Iterations at which the mean squared error is compared.
        #[arg(long, value_delimiter = ',', default_value = "100,500,2000")]
        checkpoints: Vec<usize>,
        /// Overrides the config's step with a constant fraction of η̄.
        #[arg(long)]
        eta_fraction: Option<f64>,
    },
    /// Runs an experiment suite described by a JSON file.
    Sweep {
        /// JSON suite file.
        suite: PathBuf,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Epsilon { data, f_max, r_max } => {
            let problem = load_problem(cli, data.as_deref())?;
            let grid = epsilon_grid(&problem, *f_max, *r_max);
            let mut buf = Vec::new();
            grid.write_csv(&mut buf)?;
            emit(cli.out.as_deref(), "epsilon.csv", &buf)?;
            for ((f, r), why) in &grid.reasons {
                eprintln!("f={f} r={r}: {why}");
            }
            Ok(EXIT_OK)
        }
        Command::Bounds {
            data,
            f,
            r,
            tau,
            eta0,
            eta,
            eta_fraction,
            sigma,
            half_width,
            json,
        } => {
            let problem = load_problem(cli, data.as_deref())?;
            let report = bounds_command(&problem, *f, *r, *tau, *eta0, *eta, *eta_fraction, *sigma, *half_width)?;
            let text = if *json { to_json(&report)? } else { report.to_text() };
            print!("{text}");
            if let Some(dir) = &cli.out {
                write_atomic(&dir.join("bounds.json"), to_json(&report)?.as_bytes())?;
            }
            Ok(EXIT_OK)
        }
        Command::Run { config } => {
            let cfg = load_config(cli, config)?;
            let traj = run(&cfg)?;
            let summary = RunSummary::new(&cfg, &traj);
            let json = to_json(&summary)?;
            if let Some(dir) = &cli.out {
                let mut buf = Vec::new();
                traj.write_csv(&mut buf)?;
                write_atomic(&dir.join("trajectory.csv"), &buf)?;
                write_atomic(&dir.join("summary.json"), json.as_bytes())?;
            }
            print!("{json}");
            Ok(EXIT_OK)
        }
        Command::Table { seeds, iterations } => {
            let problem = load_problem(cli, None)?;
            let base = cli.seed.unwrap_or(0);
            let seeds: Vec<u64> = (0..*seeds as u64).map(|k| base + k).collect();
            let table = results_table(&problem, &seeds, *iterations)?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            match &cli.out {
                Some(dir) => {
                    write_atomic(&dir.join("table.csv"), &buf)?;
                    let mut dbuf = Vec::new();
                    table.dstar.write_csv(&mut dbuf)?;
                    write_atomic(&dir.join("dstar.csv"), &dbuf)?;
                }
                None => {
                    std::io::stdout()
                        .write_all(&buf)
                        .map_err(|e| Error::io("<stdout>", e))?;
                    println!();
                }
            }
            print!("{}", table.to_text());
            let failures = table.failures();
            if failures.is_empty() {
                println!("PASS: all {} executions within D*", table.rows.len());
                Ok(EXIT_OK)
            } else {
                println!("FAIL: {} executions exceed D*", failures.len());
                for row in failures {
                    println!(
                        "  f={} r={} fault={} stragglers={} seed={} dist={:.6} D*={:.6}",
                        row.f, row.r, row.fault, row.stragglers, row.seed, row.dist, row.d_star
                    );
                }
                Ok(EXIT_BOUND_FAILURE)
            }
        }
        Command::StochasticCheck {
            config,
            seeds,
            checkpoints,
            eta_fraction,
        } => {
            let cfg = load_config(cli, config)?;
            let base = cli.seed.unwrap_or(cfg.seed);
            let seeds: Vec<u64> = (0..*seeds as u64).map(|k| base + k).collect();
            let report = stochastic_check(&cfg, &seeds, checkpoints, *eta_fraction)?;
            if let Some(dir) = &cli.out {
                let mut buf = Vec::new();
                report.write_csv(&mut buf)?;
                write_atomic(&dir.join("stochastic.csv"), &buf)?;
            }
            print!("{}", report.to_text());
            Ok(if report.pass() { EXIT_OK } else { EXIT_BOUND_FAILURE })
        }
        Command::Sweep { suite } => {
            let text = std::fs::read_to_string(suite).map_err(|e| Error::io(suite, e))?;
            let spec: ExperimentSuite = crate::config::from_json_str(&text, &suite.display().to_string())?;
            let out = match (&cli.out, &spec.out) {
                (Some(dir), _) => dir.clone(),
                (None, Some(dir)) => base_dir_of(suite).join(dir),
                (None, None) => return Err(Error::InvalidArgument("sweep needs --out or an \"out\" field".into())),
            };
            let cells = run_suite(&spec, &base_dir_of(suite), &out)?;
            print!("{}", sweep::summary_text(&cells));
            let bad = cells.iter().filter(|c| c.pass == Some(false)).count();
            Ok(if bad == 0 { EXIT_OK } else { EXIT_BOUND_FAILURE })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bounds_command(
    problem: &RegressionProblem,
    f: usize,
    r: usize,
    tau: Option<usize>,
    eta0: f64,
    eta: Option<f64>,
    eta_fraction: Option<f64>,
    sigma: Option<f64>,
    half_width: f64,
) -> Result<BoundsReport> {
    let domain = BoxDomain::hypercube(problem.dim(), half_width)?;
    let eta = match eta_fraction {
        Some(frac) => {
            let mu = crate::bounds::lipschitz_mu(problem)?;
            let gamma = crate::bounds::convexity_gamma(problem, f)?;
            Some(frac * step_ceiling(problem.n(), f, r, mu, gamma)?.1)
        }
        None => eta,
    };
    let query = BoundsQuery {
        domain: Some(domain),
        tau,
        eta0: Some(eta0),
        eta,
        sigma,
        honest: None,
    };
    bounds_report(problem, f, r, &query)
}

/// Dataset from `--data`, else `--fixture`, else the bundled fixture.
fn load_problem(cli: &Cli, data: Option<&Path>) -> Result<RegressionProblem> {
    match (data, &cli.fixture) {
        (Some(_), Some(_)) => Err(Error::InvalidArgument(
            "give either --data or --fixture, not both".into(),
        )),
        (Some(path), None) => RegressionProblem::from_csv_path(path),
        (None, Some(name)) => load_fixture(name),
        (None, None) => load_fixture(BUNDLED_FIXTURE_NAME),
    }
}

/// Config file with `--fixture` and `--seed` applied on top.
fn load_config(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let file = ConfigFile::from_path(path)?;
    let mut cfg = match &cli.fixture {
        Some(name) => file.resolve_with(load_fixture(name)?)?,
        None => file.resolve(&base_dir_of(path))?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Summary written next to a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub x_out: Vec<f64>,
    pub x_h: Vec<f64>,
    pub dist: f64,
    pub iterations: usize,
    pub seed: u64,
    pub bounds: Option<BoundsReport>,
    pub within_d_star: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds_error: Option<String>,
}

impl RunSummary {
    pub fn new(cfg: &RunConfig, traj: &crate::engine::Trajectory) -> Self {
        let query = BoundsQuery {
            domain: Some(cfg.domain.clone()),
            tau: match cfg.gar {
                crate::aggregation::GarSpec::StaleSum { tau } => Some(tau),
                _ => None,
            },
            eta0: Some(cfg.schedule.eta(0)),
            honest: Some(cfg.roster.honest()),
            ..Default::default()
        };
        let (bounds, bounds_error) = match bounds_report(&cfg.problem, cfg.roster.f(), cfg.roster.r(), &query) {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let dist = traj.final_dist();
        Self {
            x_out: traj.x_out().as_slice().to_vec(),
            x_h: traj.x_h.as_slice().to_vec(),
            dist,
            iterations: cfg.iterations,
            seed: cfg.seed,
            within_d_star: bounds.as_ref().map(|b| dist <= b.d_star + DIST_TOLERANCE),
            bounds,
            bounds_error,
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `out/name` if an output directory was given, else prints to stdout.
fn emit(out: Option<&Path>, name: &str, bytes: &[u8]) -> Result<()> {
    match out {
        Some(dir) => write_atomic(&dir.join(name), bytes),
        None => std::io::stdout().write_all(bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Write to a sibling temp file, then rename over the target.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn fmt_point(x: &DVector<f64>) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.4}")).collect();
    format!("({})", parts.join(", "))
}
