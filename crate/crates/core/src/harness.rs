//! Random instances, seeded trial batches and their reports.

use std::io::Write;
use std::time::Instant;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{normalize, parse_nfa, AutomatonError, Nfa, Symbol, Transition};
use crate::estimator::{count_nfa, rational_to_decimal, CountConfig, EstimatorError, Scheme};
use crate::exact::{count_exact_dp, count_exact_enum, ExactError};
use crate::probability::parse_rational;
use crate::unrolling::{slice_nonempty, unroll};

/// Attempts made by [`random_nfa`] before giving up on a target length.
pub const RETRY_BUDGET: usize = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid instance parameters: {0}")]
    InvalidInstance(String),
    #[error("no automaton with a non-empty length-{n} slice after {RETRY_BUDGET} attempts")]
    RetriesExhausted { n: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("report output: {0}")]
    Io(#[from] std::io::Error),
    #[error("report output: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::InvalidInstance(_) => "invalid_instance",
            HarnessError::RetriesExhausted { .. } => "retries_exhausted",
            HarnessError::InvalidGrid(_) => "invalid_grid",
            HarnessError::Automaton(e) => e.code(),
            HarnessError::Estimator(e) => e.code(),
            HarnessError::Io(_) | HarnessError::Csv(_) => "io",
        }
    }
}

/// A random automaton over states `q0 … q{m−1}`: each of the `2m²` possible
/// transitions is present independently with probability `density`, and one
/// initial and one final state are drawn uniformly. With `target_n`, draws
/// are repeated until some word of that length is accepted.
pub fn random_nfa(m: usize, density: f64, seed: u64, target_n: Option<usize>) -> Result<Nfa, HarnessError> {
    if m == 0 || !(density > 0.0 && density <= 1.0) {
        return Err(HarnessError::InvalidInstance(format!("m = {m}, density = {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<String> = (0..m).map(|i| format!("q{i}")).collect();
    for _ in 0..RETRY_BUDGET {
        let mut transitions = Vec::new();
        for source in 0..m {
            for symbol in Symbol::ALL {
                for target in 0..m {
                    if rng.random_bool(density) {
                        transitions.push(Transition {
                            source,
                            symbol,
                            target,
                        });
                    }
                }
            }
        }
        let initial = rng.random_range(0..m);
        let fin = rng.random_range(0..m);
        let nfa = Nfa::new(states.clone(), vec![initial], vec![fin], transitions)?;
        match target_n {
            Some(n) if !slice_nonempty(&unroll(&normalize(&nfa), n)) => continue,
            _ => return Ok(nfa),
        }
    }
    Err(HarnessError::RetriesExhausted {
        n: target_n.unwrap_or(0),
    })
}

/// Which exact oracle a trial consults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OracleChoice {
    Enum,
    #[default]
    Dp,
    Off,
}

/// One automaton in a grid: random by `(m, density, instance_seed)` unless
/// an explicit automaton is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    #[serde(default)]
    pub m: usize,
    pub n: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub instance_seed: u64,
    /// An automaton in the input JSON format, used instead of a random one.
    #[serde(default)]
    pub nfa: Option<serde_json::Value>,
}

fn default_density() -> f64 {
    0.35
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Cache2]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn scheme_list<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Scheme>, D::Error> {
    let names = Vec::<String>::deserialize(d)?;
    names
        .iter()
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .collect()
}

/// A batch of trials: every instance × scheme × seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub instances: Vec<InstanceSpec>,
    pub epsilon: String,
    pub delta: String,
    #[serde(default = "default_schemes", deserialize_with = "scheme_list", skip_serializing)]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub oracle: OracleChoice,
    #[serde(default)]
    pub float_mode: bool,
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::InvalidGrid(e.to_string()))
    }
}

/// The 20-instance grid used by the end-to-end acceptance check:
/// `m ∈ [2, 8]`, `n ∈ [4, 10]`, density 0.35, `ε = 1`, `δ = 0.2`.
pub fn acceptance_grid() -> GridConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let instances = (0..20)
        .map(|i| InstanceSpec {
            id: format!("grid-{i:02}"),
            m: rng.random_range(2..=8),
            n: rng.random_range(4..=10),
            density: 0.35,
            instance_seed: 1000 + i,
            nfa: None,
        })
        .collect();
    GridConfig {
        instances,
        epsilon: "1".into(),
        delta: "0.2".into(),
        schemes: vec![Scheme::Cache2],
        seeds: vec![7],
        oracle: OracleChoice::Dp,
        float_mode: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub instance: String,
    pub m: usize,
    pub n: usize,
    pub epsilon: String,
    pub delta: String,
    pub seed: u64,
    pub scheme: String,
    /// Exact rational value of the estimate.
    pub estimate: String,
    pub estimate_decimal: String,
    /// Exact count, absent when no oracle ran or its guard refused.
    pub exact: Option<String>,
    pub within_tolerance: Option<bool>,
    /// Whether at least one core stopped at the sample-count threshold.
    pub early_zero: bool,
    pub interrupted_cores: usize,
    pub cores: usize,
    pub wall_ms: u64,
}

fn instance_nfa(spec: &InstanceSpec) -> Result<Nfa, HarnessError> {
    match &spec.nfa {
        Some(value) => Ok(parse_nfa(&value.to_string())?),
        None => random_nfa(spec.m, spec.density, spec.instance_seed, Some(spec.n)),
    }
}

fn exact_count(nfa: &Nfa, n: usize, oracle: OracleChoice) -> Option<BigUint> {
    let u = unroll(&normalize(nfa), n);
    let result: Result<BigUint, ExactError> = match oracle {
        OracleChoice::Off => return None,
        _ if n == 0 => return Some(BigUint::from(normalize(nfa).accepts_empty() as u8)),
        OracleChoice::Enum => count_exact_enum(&u),
        OracleChoice::Dp => count_exact_dp(&u),
    };
    result.ok()
}

/// Whether `exact (1 − ε) ≤ estimate ≤ exact (1 + ε)`.
pub fn within_tolerance(estimate: &BigRational, exact: &BigUint, epsilon: &BigRational) -> bool {
    let exact = BigRational::from_integer(exact.clone().into());
    let one = BigRational::from_integer(1.into());
    &exact * (&one - epsilon) <= *estimate && *estimate <= &exact * (&one + epsilon)
}

/// Runs every trial of the grid. Reports come back ordered by instance,
/// then scheme, then seed, whatever the completion order.
pub fn run_trials(config: &GridConfig) -> Result<Vec<TrialReport>, HarnessError> {
    let epsilon =
        parse_rational(&config.epsilon).ok_or_else(|| HarnessError::InvalidGrid(format!("epsilon `{}`", config.epsilon)))?;
    let delta =
        parse_rational(&config.delta).ok_or_else(|| HarnessError::InvalidGrid(format!("delta `{}`", config.delta)))?;
    let prepared = config
        .instances
        .iter()
        .map(|spec| {
            let nfa = instance_nfa(spec)?;
            let exact = exact_count(&nfa, spec.n, config.oracle);
            Ok((spec, nfa, exact))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let jobs: Vec<(usize, Scheme, u64)> = (0..prepared.len())
        .flat_map(|i| {
            config
                .schemes
                .iter()
                .flat_map(move |&s| config.seeds.iter().map(move |&seed| (i, s, seed)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(i, scheme, seed)| {
            let (spec, nfa, exact) = &prepared[i];
            let mut count = CountConfig::new(epsilon.clone(), delta.clone(), seed);
            count.scheme = scheme;
            count.float_mode = config.float_mode;
            let start = Instant::now();
            let outcome = count_nfa(nfa, spec.n, &count)?;
            let wall_ms = start.elapsed().as_millis() as u64;
            let interrupted = outcome.cores.iter().filter(|c| c.interrupted).count();
            Ok(TrialReport {
                instance: spec.id.clone(),
                m: nfa.state_count(),
                n: spec.n,
                epsilon: epsilon.to_string(),
                delta: delta.to_string(),
                seed,
                scheme: scheme.to_string(),
                estimate: outcome.estimate.to_string(),
                estimate_decimal: rational_to_decimal(&outcome.estimate),
                exact: exact.as_ref().map(ToString::to_string),
                within_tolerance: exact.as_ref().map(|e| within_tolerance(&outcome.estimate, e, &epsilon)),
                early_zero: interrupted > 0,
                interrupted_cores: interrupted,
                cores: outcome.cores.len(),
                wall_ms,
            })
        })
        .collect()
}

pub fn write_jsonl<W: Write>(reports: &[TrialReport], mut out: W) -> Result<(), HarnessError> {
    for r in reports {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(reports: &[TrialReport], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Fraction of reports with an exact value that are within tolerance.
pub fn tolerance_rate(reports: &[TrialReport]) -> Option<(usize, usize)> {
    let judged: Vec<bool> = reports.iter().filter_map(|r| r.within_tolerance).collect();
    if judged.is_empty() {
        None
    } else {
        Some((judged.iter().filter(|&&ok| ok).count(), judged.len()))
    }
}

/// `true` when the estimate string denotes zero.
pub fn is_zero_estimate(r: &TrialReport) -> bool {
    parse_rational(&r.estimate).is_none_or(|v| v.is_zero())
}
