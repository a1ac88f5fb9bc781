//! Command-line front end: load a model spec and a dataset, then compute,
//! sample, evaluate, or verify the conjugate posterior.
//!
//! Exit codes: 0 success, 2 parse or file error, 3 numeric failure,
//! 4 unsupported configuration, 5 sampler acceptance too low, 6 oracle
//! check failed. Every failure prints one diagnostic line on stderr.

pub mod output;
pub mod spec;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use sue_core::conjugate::posterior;
use sue_core::mvprob::default_tol;
use sue_core::oracle::{bayes_check, BayesOptions, MAX_GRID_DIM};
use sue_core::sue::{sue_sample, DensityEvaluator, SueDistribution};

use crate::output::{fmt_f64, to_json, RunResult};
use crate::spec::{load, read_table, LoadedModel};

/// Largest relative sup-norm deviation accepted by `check`.
pub const CHECK_LIMIT: f64 = 1e-3;
/// Largest number of observations `check` accepts.
pub const CHECK_MAX_N: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Parse(String),
    Numeric(String),
    Unsupported(String),
    LowAcceptance(String),
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Unsupported(_) => 4,
            CliError::LowAcceptance(_) => 5,
            CliError::CheckFailed(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Parse(m)
            | CliError::Numeric(m)
            | CliError::Unsupported(m)
            | CliError::LowAcceptance(m)
            | CliError::CheckFailed(m) => m,
        }
    }
}

impl From<sue_core::Error> for CliError {
    fn from(e: sue_core::Error) -> Self {
        use sue_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_) | E::InvalidIndex { .. } => CliError::Parse(msg),
            E::NotPositiveDefinite(_)
            | E::DegenerateScale(_)
            | E::RankDeficient { .. }
            | E::IllConditioned(_)
            | E::NonConvergence { .. }
            | E::SupportTruncated { .. } => CliError::Numeric(msg),
            E::UnsupportedGenerator(_) | E::DimensionTooLarge { .. } => CliError::Unsupported(msg),
            E::LowAcceptance { .. } => CliError::LowAcceptance(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sue", version, about = "Conjugate skew-elliptical posteriors for linear, probit and tobit regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Inputs {
    /// Model spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Data table: header row, columns x_1..x_p then y.
    #[arg(long)]
    data: PathBuf,
    /// Seed for every random or quasi-random step.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Absolute tolerance for CDF evaluations (default: per generator family).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the posterior parameters and diagnostics.
    Posterior {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write posterior draws as a table with header beta_1..beta_p.
    Sample {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the posterior log-density and its error bound at each point.
    Density {
        #[command(flatten)]
        inputs: Inputs,
        /// Points table with p columns and a header row.
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the closed-form posterior with a grid Bayes-rule reference.
    Check {
        #[command(flatten)]
        inputs: Inputs,
        /// Test hook: shift the posterior location before comparing.
        #[arg(long, hide = true)]
        corrupt_posterior: bool,
    },
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    let outcome = match cli.command {
        Command::Posterior { inputs, out } => cmd_posterior(&inputs, &out),
        Command::Sample { inputs, n, out } => cmd_sample(&inputs, n, &out),
        Command::Density { inputs, points, out } => cmd_density(&inputs, &points, &out),
        Command::Check { inputs, corrupt_posterior } => cmd_check(&inputs, corrupt_posterior),
    };
    eprintln!("wall_time_s={:.3}", start.elapsed().as_secs_f64());
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn validated_tol(tol: Option<f64>) -> Result<Option<f64>, CliError> {
    match tol {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(CliError::Parse(format!("--tol must be positive, got {t}"))),
        t => Ok(t),
    }
}

fn load_with_posterior(inputs: &Inputs) -> Result<(LoadedModel, sue_core::conjugate::PosteriorReport), CliError> {
    let model = load(&inputs.spec, &inputs.data)?;
    let report = posterior(&model.joint, &model.observation)?;
    Ok((model, report))
}

fn header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("beta_{j}")).collect()
}

fn cmd_posterior(inputs: &Inputs, out: &Path) -> Result<(), CliError> {
    validated_tol(inputs.tol)?;
    let (model, report) = load_with_posterior(inputs)?;
    let result = RunResult::new("posterior", inputs.seed, model.joint.n(), &report, &model.expanded);
    write_file(out, &to_json(&result))
}

fn cmd_sample(inputs: &Inputs, n: usize, out: &Path) -> Result<(), CliError> {
    validated_tol(inputs.tol)?;
    let (_, report) = load_with_posterior(inputs)?;
    let post = &report.posterior;
    let draws = sue_sample(post, n, inputs.seed)?;
    let mut text = header(post.m()).join(",");
    text.push('\n');
    for i in 0..draws.draws.nrows() {
        let row: Vec<String> = draws.draws.row(i).iter().map(|&v| fmt_f64(v)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_file(out, &text)?;
    eprintln!("acceptance_rate={:.6e} proposals={}", draws.acceptance_rate, draws.proposals);
    Ok(())
}

fn cmd_density(inputs: &Inputs, points: &Path, out: &Path) -> Result<(), CliError> {
    let tol = validated_tol(inputs.tol)?;
    let (_, report) = load_with_posterior(inputs)?;
    let post = &report.posterior;
    let p = post.m();
    let (cols, rows) = read_table(points)?;
    if cols.len() != p {
        return Err(CliError::Parse(format!("{}: expected {p} columns, got {}", points.display(), cols.len())));
    }
    let eval = DensityEvaluator::new(post, tol.unwrap_or_else(|| default_tol(post.generator())), inputs.seed)?;
    let mut text = header(p).join(",");
    text.push_str(",log_density,log_density_error\n");
    for row in rows {
        let est = eval.pdf(&DVector::from_vec(row.clone()))?;
        // First-order bound on the log from the absolute density error.
        let log_err = if est.value > 0.0 { est.abs_error / est.value } else { f64::INFINITY };
        let cells: Vec<String> = row.iter().chain([est.log_value, log_err].iter()).map(|&v| fmt_f64(v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_file(out, &text)
}

/// Shifts the location of `d` by one scale unit per coordinate.
fn corrupted(d: &SueDistribution) -> Result<SueDistribution, CliError> {
    Ok(SueDistribution::new(
        d.xi() + d.scales(),
        d.omega().clone(),
        d.delta().clone(),
        d.tau().clone(),
        d.gamma_bar().clone(),
        d.generator().clone(),
    )?)
}

fn cmd_check(inputs: &Inputs, corrupt: bool) -> Result<(), CliError> {
    let tol = validated_tol(inputs.tol)?;
    let (model, report) = load_with_posterior(inputs)?;
    let (p, n) = (model.joint.p(), model.joint.n());
    if p > MAX_GRID_DIM || n > CHECK_MAX_N {
        return Err(CliError::Unsupported(format!(
            "check needs p ≤ {MAX_GRID_DIM} and n ≤ {CHECK_MAX_N}, got p = {p}, n = {n}"
        )));
    }
    let post = if corrupt { corrupted(&report.posterior)? } else { report.posterior.clone() };
    let mut opts = BayesOptions::for_dim(p, inputs.seed);
    if tol.is_some() {
        opts.tol = tol;
    }
    let r = bayes_check(&model.joint, &model.observation, &post, &opts)?;
    let mut line = String::new();
    write!(
        line,
        "max_rel_dev={} limit={} n_compared={} grid_points={}",
        fmt_f64(r.max_rel_dev),
        fmt_f64(CHECK_LIMIT),
        r.n_compared,
        r.grid_points
    )
    .expect("writing to a string");
    if r.passed(CHECK_LIMIT) {
        println!("{line} PASS");
        Ok(())
    } else {
        println!("{line} FAIL");
        Err(CliError::CheckFailed(format!("posterior deviates from the grid reference: {line}")))
    }
}
