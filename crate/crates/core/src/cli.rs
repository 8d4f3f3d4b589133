//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::automaton::{normalize, parse_nfa, AutomatonError, Nfa};
use crate::estimator::{count_nfa, rational_to_decimal, CountConfig, EstimatorError, Scheme};
use crate::exact::{count_exact_dp, count_exact_enum, ExactError};
use crate::harness::{run_trials, write_csv, write_jsonl, GridConfig, HarnessError};
use crate::probability::parse_rational;
use crate::unrolling::unroll;

#[derive(Debug, Parser)]
#[command(name = "nfacount", version, about = "Count the length-n words accepted by a binary NFA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Reference,
    Cache1,
    Cache2,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Reference => Scheme::Reference,
            SchemeArg::Cache1 => Scheme::Cache1,
            SchemeArg::Cache2 => Scheme::Cache2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleArg {
    Enum,
    Dp,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Approximate count with the randomized algorithm.
    Count {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        /// Relative tolerance, as a decimal or fraction.
        #[arg(long)]
        epsilon: String,
        /// Failure probability in (0, 1], as a decimal or fraction.
        #[arg(long)]
        delta: String,
        #[arg(long, env = "NFACOUNT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SchemeArg::Cache2)]
        scheme: SchemeArg,
        /// Worker threads (0: one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Use double precision probabilities; the result is not certified.
        #[arg(long)]
        float_mode: bool,
        /// Also report an exact count from the chosen oracle.
        #[arg(long, value_enum, default_value_t = OracleArg::Off)]
        exact: OracleArg,
        /// Report `runtime_ms` as null so identical runs print identical bytes.
        #[arg(long)]
        no_timing: bool,
        /// Include the unrolled automaton in the output.
        #[arg(long)]
        dump_unrolled: bool,
    },
    /// Exact count with one of the oracles.
    Exact {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = OracleArg::Dp)]
        oracle: OracleArg,
    },
    /// Run a grid of seeded trials and emit one report per trial.
    Bench {
        /// Grid description (JSON).
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Jsonl)]
        format: ReportFormat,
        /// Worker threads (0: one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the unrolled automaton as JSON.
    DumpUnrolled {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: usize,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid {name} `{value}`")]
    InvalidNumber { name: &'static str, value: String },
    #[error("the exact oracle is off")]
    OracleOff,
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Read { .. } => "read_error",
            CliError::InvalidNumber { .. } => "invalid_number",
            CliError::OracleOff => "oracle_off",
            CliError::Output(_) => "output_error",
            CliError::ThreadPool(_) => "thread_pool",
            CliError::Automaton(e) => e.code(),
            CliError::Exact(e) => e.code(),
            CliError::Estimator(e) => e.code(),
            CliError::Harness(e) => e.code(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": {"code": self.code(), "message": self.to_string()}})
    }
}

fn read_nfa(path: &PathBuf) -> Result<Nfa, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    Ok(parse_nfa(&text)?)
}

fn exact_value(nfa: &Nfa, n: usize, oracle: OracleArg) -> Result<String, CliError> {
    let normalized = normalize(nfa);
    if n == 0 {
        return Ok(u8::from(normalized.accepts_empty()).to_string());
    }
    let u = unroll(&normalized, n);
    Ok(match oracle {
        OracleArg::Enum => count_exact_enum(&u)?,
        OracleArg::Dp => count_exact_dp(&u)?,
        OracleArg::Off => return Err(CliError::OracleOff),
    }
    .to_string())
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Executes one parsed command, writing its result to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Count {
            input,
            n,
            epsilon,
            delta,
            seed,
            scheme,
            jobs,
            float_mode,
            exact,
            no_timing,
            dump_unrolled,
        } => {
            let nfa = read_nfa(&input)?;
            let epsilon = parse_rational(&epsilon).ok_or(CliError::InvalidNumber {
                name: "epsilon",
                value: epsilon,
            })?;
            let delta = parse_rational(&delta).ok_or(CliError::InvalidNumber {
                name: "delta",
                value: delta,
            })?;
            let mut config = CountConfig::new(epsilon, delta, seed);
            config.scheme = scheme.into();
            config.float_mode = float_mode;
            config.jobs = jobs;
            let start = Instant::now();
            let outcome = count_nfa(&nfa, n, &config)?;
            let runtime_ms = start.elapsed().as_millis() as u64;
            let mut report = json!({
                "estimate": rational_to_decimal(&outcome.estimate),
                "estimate_rational": outcome.estimate.to_string(),
                "params": outcome.params.as_ref().map(|p| p.to_json()),
                "n_cores_run": outcome.cores.len(),
                "interrupted_cores": outcome.cores.iter().filter(|c| c.interrupted).count(),
                "runtime_ms": if no_timing { None } else { Some(runtime_ms) },
                "certified": outcome.certified,
                "scheme": config.scheme.name(),
                "seed": seed,
            });
            if exact != OracleArg::Off {
                report["exact"] = json!(exact_value(&nfa, n, exact)?);
            }
            if dump_unrolled {
                report["unrolled"] = unroll(&normalize(&nfa), n).to_json();
            }
            writeln!(out, "{report}")?;
        }
        Command::Exact { input, n, oracle } => {
            let nfa = read_nfa(&input)?;
            writeln!(out, "{}", exact_value(&nfa, n, oracle)?)?;
        }
        Command::Bench { grid, format, jobs } => {
            let text = std::fs::read_to_string(&grid).map_err(|source| CliError::Read { path: grid, source })?;
            let config = GridConfig::from_json(&text)?;
            let reports = with_jobs(jobs, || run_trials(&config))??;
            match format {
                ReportFormat::Jsonl => write_jsonl(&reports, &mut *out)?,
                ReportFormat::Csv => write_csv(&reports, &mut *out)?,
            }
        }
        Command::DumpUnrolled { input, n } => {
            let nfa = read_nfa(&input)?;
            writeln!(out, "{}", unroll(&normalize(&nfa), n).to_json())?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code:
/// `0` on success, `2` on any input or runtime error (reported as JSON on
/// standard error).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            2
        }
    }
}
