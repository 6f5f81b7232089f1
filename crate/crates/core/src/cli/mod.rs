//! The `stepwise` command-line front end.
//!
//! ```text
//! stepwise run-center [--s 11 --a 1 --nmax 10 --lambda-s 1 | --dlambda 0.1]
//! stepwise run-spring [--s 11 --a 0.1 --nmax 100 --omega-ratio 1.3]
//! stepwise sweep      --param {n-max,dlambda,a} [--values 0.05,0.1,...]
//! stepwise pathways   [--s 3 --nmax 3 --a 1 --tol 0.05 --eps 1e-12]
//! ```
//!
//! Every subcommand accepts `--config FILE` (JSON, same keys as the flags
//! with underscores), `--out DIR` and `--jobs N`. Flags override the file.
//! Exit status is 0 on success, 1 on numerical failure and 2 on
//! configuration or I/O errors; failures print one `error: <code>: ...`
//! line to stderr.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::free_energy::{
    exponential_average, ground_state_closed_form_center, linear_fit, thermal_closed_form_center,
    FreeEnergyProfile,
};
use crate::grid::fmt_num;
use crate::pathways::{decompose_free_energy, find_optimal_transitions, PairBalance, PathwayDecomposition};
use crate::protocol::{
    build_center_schedule, build_center_schedule_with_increment, build_spring_schedule, PullSchedule,
};
use crate::workdist::{work_moments, WorkLedger};

pub use config::{Command, ConfigFile, RunConfig, SweepParam};
use output::{nums, OutputDir};

/// A failure reported to the user, with its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub status: i32,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: "config-error".into(),
            message: message.into(),
            status: 2,
        }
    }

    pub fn unwritable(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: "output-unwritable".into(),
            message: format!("{}: {err}", path.display()),
            status: 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = match &e {
            Error::InvalidParameter(m) | Error::EnumerationCap(m) | Error::Unsupported(m) => m.clone(),
            _ => e.to_string(),
        };
        Self {
            code: e.code().into(),
            message,
            status: if e.is_numerical() { 1 } else { 2 },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // one line, whatever the source message contained
        write!(f, "error: {}: {}", self.code, self.message.replace('\n', " "))
    }
}

#[derive(Debug, Parser)]
#[command(name = "stepwise", version, about = "Free-energy changes from step-wise pulling work distributions")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Center-pulling protocol: work distributions and free-energy profile.
    RunCenter(Flags),
    /// Spring-stiffening protocol: work distributions and free-energy profile.
    RunSpring(Flags),
    /// Center protocol swept over n_max, Δλ or a.
    Sweep(Flags),
    /// Transition residuals and pathway decomposition at small s and n_max.
    Pathways(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Number of pulling steps.
    #[arg(long)]
    s: Option<usize>,
    /// Reduced temperature (a for the center protocol, a0 for the spring protocol).
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Eigenbasis truncation.
    #[arg(long = "nmax")]
    n_max: Option<usize>,
    /// Center increment Δλ (sets λ_s = (s − 1)Δλ).
    #[arg(long, allow_negative_numbers = true)]
    dlambda: Option<f64>,
    /// Final center position λ_s.
    #[arg(long = "lambda-s", allow_negative_numbers = true)]
    lambda_s: Option<f64>,
    /// Final frequency ratio ω_s/ω₀.
    #[arg(long = "omega-ratio", allow_negative_numbers = true)]
    omega_ratio: Option<f64>,
    /// Residual tolerance for the transition tests.
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Density floor relative to each step's peak density.
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Reaction-coordinate grid points.
    #[arg(long = "x-points")]
    x_points: Option<usize>,
    /// Work lattice points (default: sized automatically).
    #[arg(long = "w-points")]
    w_points: Option<usize>,
    /// Swept parameter.
    #[arg(long, value_enum)]
    param: Option<SweepParam>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    values: Option<Vec<f64>>,
}

impl Flags {
    fn into_layers(self) -> (Option<PathBuf>, ConfigFile) {
        let flags = ConfigFile {
            s: self.s,
            a: self.a,
            n_max: self.n_max,
            lambda_s: self.lambda_s,
            dlambda: self.dlambda,
            omega_ratio: self.omega_ratio,
            tol: self.tol,
            eps: self.eps,
            jobs: self.jobs,
            out: self.out,
            x_points: self.x_points,
            w_points: self.w_points,
            param: self.param,
            values: self.values,
        };
        (self.config, flags)
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand)
            {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError { code: "usage".into(), message: first, status: 2 });
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.status
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, flags) = match cli.command {
        Sub::RunCenter(f) => (Command::RunCenter, f),
        Sub::RunSpring(f) => (Command::RunSpring, f),
        Sub::Sweep(f) => (Command::Sweep, f),
        Sub::Pathways(f) => (Command::Pathways, f),
    };
    let (config_path, flags) = flags.into_layers();
    let file = match config_path {
        Some(p) => ConfigFile::load(&p)?,
        None => ConfigFile::default(),
    };
    let config = RunConfig::resolve(command, file.overlay(flags))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {} workers: {e}", config.jobs)))?;
    pool.install(|| execute(&config))
}

/// Runs an already resolved configuration.
pub fn execute(config: &RunConfig) -> Result<(), CliError> {
    match config.command {
        Command::RunCenter => cmd_run_center(config),
        Command::RunSpring => cmd_run_spring(config),
        Command::Sweep => cmd_sweep(config),
        Command::Pathways => cmd_pathways(config),
    }
}

fn with_grids(schedule: PullSchedule, config: &RunConfig) -> Result<PullSchedule, Error> {
    let mut schedule = schedule;
    if config.x_points != crate::protocol::DEFAULT_X_POINTS {
        schedule = schedule.with_x_points(config.x_points)?;
    }
    if let Some(p) = config.w_points {
        schedule = schedule.with_w_points(p)?;
    }
    Ok(schedule)
}

fn center_schedule(config: &RunConfig, s: usize, a: f64, n_max: usize, dlambda: Option<f64>) -> Result<PullSchedule, Error> {
    let schedule = match dlambda {
        Some(dl) => build_center_schedule_with_increment(dl, s, a, n_max)?,
        None => build_center_schedule(config.lambda_s, s, a, n_max)?,
    };
    with_grids(schedule, config)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    protocol: &'a str,
    energy_unit: &'a str,
    s: usize,
    increment: f64,
    increment_name: &'a str,
    controls: &'a [f64],
    delta_f: f64,
    delta_f_target: f64,
    mean_w: f64,
    std_w: f64,
    f_ref: f64,
    x_grid: crate::grid::GridSpec,
    w_grid: crate::grid::GridSpec,
}

fn write_run(config: &RunConfig, schedule: &PullSchedule, name: &str, increment_name: &str) -> Result<(), CliError> {
    let ledger = WorkLedger::build(schedule)?;
    let profile = FreeEnergyProfile::from_ledger(schedule, &ledger)?;
    let out = OutputDir::create(&config.out, config.to_json())?;
    for (j, rho) in ledger.distributions.iter().enumerate() {
        out.density(&format!("workdist_step_{}.csv", j + 1), rho, ("W", "rho"))?;
    }
    let rows: Vec<Vec<String>> = (0..profile.len())
        .map(|j| {
            let mut row = vec![(j + 1).to_string()];
            row.extend(nums(&[
                profile.controls[j],
                profile.delta_f[j],
                profile.target[j],
                profile.mean_w[j],
                profile.std_w[j],
                profile.f_ref[j],
            ]));
            row
        })
        .collect();
    out.table(
        "profile.csv",
        &["step", "control", "dF", "dF_target", "mean_W", "std_W", "F_ref"],
        &rows,
    )?;
    let last = profile.len() - 1;
    out.json(
        "run.json",
        &RunSummary {
            protocol: name,
            energy_unit: schedule.energy_unit(),
            s: schedule.s,
            increment: schedule.increment,
            increment_name,
            controls: &schedule.controls,
            delta_f: profile.delta_f[last],
            delta_f_target: profile.target[last],
            mean_w: profile.mean_w[last],
            std_w: profile.std_w[last],
            f_ref: profile.f_ref[last],
            x_grid: schedule.x_grid,
            w_grid: schedule.w_grid,
        },
    )
}

/// `run-center`: work distributions of every step and the free-energy profile.
pub fn cmd_run_center(config: &RunConfig) -> Result<(), CliError> {
    let schedule = center_schedule(config, config.s, config.a, config.n_max, config.dlambda)?;
    write_run(config, &schedule, "center", "dlambda")
}

/// `run-spring`: as `run-center` for the stiffening trap; `run.json` echoes δ.
pub fn cmd_run_spring(config: &RunConfig) -> Result<(), CliError> {
    let schedule = with_grids(
        build_spring_schedule(config.omega_ratio, config.s, config.a, config.n_max)?,
        config,
    )?;
    write_run(config, &schedule, "spring", "delta")
}

struct SweepRow {
    value: f64,
    s: usize,
    dlambda: f64,
    a: f64,
    n_max: usize,
    delta_f: f64,
    target: f64,
    mean_w: f64,
    std_w: f64,
    oracle: f64,
}

fn sweep_point(config: &RunConfig, param: SweepParam, value: f64) -> Result<SweepRow, CliError> {
    let (mut s, mut a, mut n_max, mut dlambda) = (config.s, config.a, config.n_max, config.dlambda);
    match param {
        SweepParam::NMax => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(CliError::config(format!("n_max values must be whole numbers, got {value}")));
            }
            n_max = value as usize;
        }
        SweepParam::A => a = value,
        SweepParam::Dlambda => {
            if !(value > 0.0) {
                return Err(CliError::config(format!("dlambda values must be positive, got {value}")));
            }
            let steps = config.lambda_s / value;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
                return Err(CliError::config(format!(
                    "dlambda {value} does not divide lambda_s {}",
                    config.lambda_s
                )));
            }
            s = steps.round() as usize + 1;
            dlambda = None;
        }
    }
    let schedule = center_schedule(config, s, a, n_max, dlambda)?;
    let ledger = WorkLedger::build(&schedule)?;
    let rho = ledger.final_distribution();
    let delta_f = if s == 1 { 0.0 } else { exponential_average(rho, schedule.beta())? };
    let (mean_w, std_w) = work_moments(rho);
    let oracle = if n_max == 0 {
        ground_state_closed_form_center(a, schedule.increment, s)
    } else {
        thermal_closed_form_center(a, schedule.increment, s)
    };
    Ok(SweepRow {
        value,
        s,
        dlambda: schedule.increment,
        a,
        n_max,
        delta_f,
        target: schedule.target(s)?,
        mean_w,
        std_w,
        oracle,
    })
}

/// `sweep`: the center protocol over a list of n_max, Δλ (at fixed λ_s) or
/// a values, plus a least-squares line through ΔF(Δλ).
pub fn cmd_sweep(config: &RunConfig) -> Result<(), CliError> {
    let param = config.param.ok_or_else(|| CliError::config("sweep needs --param"))?;
    let rows: Vec<SweepRow> = config
        .values
        .par_iter()
        .map(|v| sweep_point(config, param, *v))
        .collect::<Result<_, _>>()?;
    let out = OutputDir::create(&config.out, config.to_json())?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![param.column().to_string(), fmt_num(r.value), r.s.to_string(), fmt_num(r.dlambda), fmt_num(r.a), r.n_max.to_string()];
            row.extend(nums(&[r.delta_f, r.target, r.mean_w, r.std_w, r.oracle]));
            row
        })
        .collect();
    out.table(
        "sweep.csv",
        &["param", "value", "s", "dlambda", "a", "n_max", "dF", "dF_target", "mean_W", "std_W", "oracle"],
        &table,
    )?;
    if param == SweepParam::Dlambda {
        let xs: Vec<f64> = rows.iter().map(|r| r.dlambda).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.delta_f).collect();
        let (slope, intercept) = linear_fit(&xs, &ys)?;
        out.table("sweep_fit.csv", &["slope", "intercept"], &[nums(&[slope, intercept])])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PathwayReport<'a> {
    decomposition: &'a PathwayDecomposition,
    balances: Vec<(usize, &'a [PairBalance])>,
}

/// `pathways`: optimal transitions of every step and the four-way
/// decomposition of the enumerated pathways.
pub fn cmd_pathways(config: &RunConfig) -> Result<(), CliError> {
    let schedule = center_schedule(config, config.s, config.a, config.n_max, config.dlambda)?;
    let decomposition = decompose_free_energy(&schedule, config.tol, config.eps)?;
    let searches = (2..=schedule.s)
        .map(|i| find_optimal_transitions(&schedule, i, config.tol, config.eps))
        .collect::<Result<Vec<_>, _>>()?;
    let out = OutputDir::create(&config.out, config.to_json())?;
    let rows: Vec<Vec<String>> = searches
        .iter()
        .flat_map(|s| s.records.iter())
        .map(|r| {
            let mut row = vec![r.step.to_string()];
            row.extend(nums(&[r.x_prev, r.x_next]));
            row.push(r.n_prev.to_string());
            row.push(r.n_next.to_string());
            row.extend(nums(&[r.e_prev, r.e_next, r.r12a, r.r12b, r.r13, r.r_quotient]));
            row.push(r.class.label().to_string());
            row
        })
        .collect();
    out.table(
        "transitions.csv",
        &["step", "x_prev", "x_next", "n_prev", "n_next", "E_prev", "E_next", "r12a", "r12b", "r13", "r_quotient", "class"],
        &rows,
    )?;
    out.json(
        "decomposition.json",
        &PathwayReport {
            decomposition: &decomposition,
            balances: searches.iter().map(|s| (s.step, s.pairs.as_slice())).collect(),
        },
    )
}
