//! The randomized counting algorithm: parameters, `reduce`, the reference
//! `union`, the per-state estimate-and-sample step, the core run with its
//! sample-count interrupt, and the outer median over independent cores.

mod engine;
mod params;

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::automaton::{normalize, Nfa, Symbol};
use crate::caching::CacheError;
use crate::exact::{membership, ExactError, Word};
use crate::probability::{median, Prob, ProbError, RandomStream, Scalar};
use crate::unrolling::{unroll, LayerState, UnrolledNfa};

pub use engine::{
    count_nfa_core, CacheEvent, CacheStage, CoreObserver, CoreOutcome, SampleSets, StateEstimate, StateEvent,
};
pub use params::{ceil_eight_ln, compute_params, EstimatorParams};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(String),
    #[error("delta must lie in (0, 1], got {0}")]
    InvalidDelta(String),
    #[error("parameter {0} does not fit in 64 bits")]
    ParameterOverflow(&'static str),
    #[error("the length-n slice is empty")]
    EmptySlice,
    #[error("expected {expected} predecessor inputs, got {found}")]
    PredecessorMismatch { expected: usize, found: usize },
    #[error("expected {expected} replicas, got {found}")]
    ReplicaMismatch { expected: usize, found: usize },
    #[error("sample {0} is not in the language of its state")]
    CorruptSample(Word),
    #[error("sample pool of {0} words exceeds the row index range")]
    PoolOverflow(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Probability(#[from] ProbError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

impl EstimatorError {
    pub fn code(&self) -> &'static str {
        match self {
            EstimatorError::InvalidEpsilon(_) => "invalid_epsilon",
            EstimatorError::InvalidDelta(_) => "invalid_delta",
            EstimatorError::ParameterOverflow(_) => "parameter_overflow",
            EstimatorError::EmptySlice => "empty_slice",
            EstimatorError::PredecessorMismatch { .. } => "predecessor_mismatch",
            EstimatorError::ReplicaMismatch { .. } => "replica_mismatch",
            EstimatorError::CorruptSample(_) => "corrupt_sample",
            EstimatorError::PoolOverflow(_) => "pool_overflow",
            EstimatorError::ThreadPool(_) => "thread_pool",
            EstimatorError::Probability(_) => "probability",
            EstimatorError::Cache(e) => e.code(),
            EstimatorError::Exact(e) => e.code(),
        }
    }
}

/// How `union` resolves membership of predecessor samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Direct membership queries, no cache.
    Reference,
    /// Boolean caches.
    Cache1,
    /// Predecessor-bitmask caches.
    Cache2,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Reference, Scheme::Cache1, Scheme::Cache2];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Reference => "reference",
            Scheme::Cache1 => "cache1",
            Scheme::Cache2 => "cache2",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

/// `reduce(S, p)`: each item kept independently with probability exactly `p`.
pub fn reduce<T: Copy>(items: &[T], p: &Prob, stream: &mut RandomStream) -> Result<Vec<T>, ProbError> {
    let sampler = p.sampler()?;
    let mut out = Vec::new();
    engine::reduce_into(items, &sampler, stream, &mut out);
    Ok(out)
}

/// `union(q, S_1, …, S_k)` with membership answered by the exact oracle.
/// `sets[i]` belongs to the `i`-th entry of `pred(q)`; `w · b` is kept iff
/// `w` came from the first `b`-predecessor whose language contains `w`.
/// The result is sorted.
pub fn union_reference(u: &UnrolledNfa, q: LayerState, sets: &[Vec<Word>]) -> Result<Vec<Word>, EstimatorError> {
    assert!(q.layer >= 1, "the initial state has no predecessors");
    let state = u.state(q);
    if sets.len() != state.preds().len() {
        return Err(EstimatorError::PredecessorMismatch {
            expected: state.preds().len(),
            found: sets.len(),
        });
    }
    let pred = |i: u32| LayerState::new(q.layer - 1, i as usize);
    for (set, &p) in sets.iter().zip(state.preds()) {
        if let Some(w) = set.iter().find(|w| !membership(u, w, pred(p))) {
            return Err(EstimatorError::CorruptSample(w.clone()));
        }
    }
    let mut out = Vec::new();
    for b in Symbol::ALL {
        let preds = state.preds_by(b);
        for (jb, &pos) in state.pred_positions_by(b).iter().enumerate() {
            for w in &sets[pos as usize] {
                if preds[..jb].iter().all(|&l| !membership(u, w, pred(l))) {
                    out.push(w.extended(b));
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

/// `estimateAndSample(q)` on explicit words, with membership answered by the
/// exact oracle. `pred_sets[i][r]` is `S^r(q_i)` for the `i`-th entry of
/// `pred(q)`, for `r < n_s · n_t`. Returns the estimate and every `S^r(q)`.
pub fn estimate_and_sample<S: Scalar>(
    u: &UnrolledNfa,
    q: LayerState,
    pred_estimates: &[S],
    pred_sets: &[Vec<Vec<Word>>],
    n_s: usize,
    n_t: usize,
    seed: u64,
    trial: u64,
) -> Result<(StateEstimate<S>, Vec<Vec<Word>>), EstimatorError> {
    engine::process_state_words(u, q, pred_estimates, pred_sets, n_s, n_t, seed, trial)
}

/// Settings of a full run.
#[derive(Debug, Clone)]
pub struct CountConfig {
    pub epsilon: BigRational,
    pub delta: BigRational,
    pub seed: u64,
    pub scheme: Scheme,
    /// Double precision probabilities instead of exact rationals.
    pub float_mode: bool,
    /// Worker threads; `0` uses the global pool.
    pub jobs: usize,
}

impl CountConfig {
    pub fn new(epsilon: BigRational, delta: BigRational, seed: u64) -> Self {
        CountConfig {
            epsilon,
            delta,
            seed,
            scheme: Scheme::Cache2,
            float_mode: false,
            jobs: 0,
        }
    }
}

/// Summary of one core run.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSummary {
    pub trial: u64,
    pub estimate: BigRational,
    pub interrupted: bool,
    pub samples: u64,
}

/// How the answer was obtained when no core ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shortcut {
    /// No word of length `n` is accepted.
    EmptySlice,
    /// `n = 0`, answered from the normalization flag.
    EmptyWord,
}

#[derive(Debug, Clone)]
pub struct CountOutcome {
    pub estimate: BigRational,
    pub params: Option<EstimatorParams>,
    pub cores: Vec<CoreSummary>,
    /// Whether exact arithmetic was used throughout.
    pub certified: bool,
    pub shortcut: Option<Shortcut>,
}

fn scalar_to_rational<S: Scalar>(v: &S) -> BigRational {
    v.to_rational().expect("core estimates are finite")
}

fn run_cores<S: Scalar>(
    u: &UnrolledNfa,
    params: &EstimatorParams,
    config: &CountConfig,
) -> Result<Vec<CoreSummary>, EstimatorError> {
    (0..params.n_u)
        .into_par_iter()
        .map(|trial| {
            let out = count_nfa_core::<S>(u, params, config.scheme, config.seed, trial, None)?;
            Ok(CoreSummary {
                trial,
                estimate: scalar_to_rational(&out.estimate),
                interrupted: out.interrupted,
                samples: out.samples,
            })
        })
        .collect()
}

/// `countNFA`: normalize, unroll, answer the trivial cases directly, then
/// return the lower median of `n_u` independent core runs.
pub fn count_nfa(nfa: &Nfa, n: usize, config: &CountConfig) -> Result<CountOutcome, EstimatorError> {
    let normalized = normalize(nfa);
    // validate tolerances even when a shortcut applies
    compute_params(&config.epsilon, &config.delta, n.max(1), normalized.state_count())?;
    if n == 0 {
        let value = if normalized.accepts_empty() { 1 } else { 0 };
        return Ok(CountOutcome {
            estimate: BigRational::from_integer(BigInt::from(value)),
            params: None,
            cores: Vec::new(),
            certified: true,
            shortcut: Some(Shortcut::EmptyWord),
        });
    }
    let u = unroll(&normalized, n);
    if u.final_state().is_none() {
        return Ok(CountOutcome {
            estimate: BigRational::zero(),
            params: None,
            cores: Vec::new(),
            certified: true,
            shortcut: Some(Shortcut::EmptySlice),
        });
    }
    let params = compute_params(&config.epsilon, &config.delta, n, normalized.state_count())?;
    let run = || {
        if config.float_mode {
            run_cores::<f64>(&u, &params, config)
        } else {
            run_cores::<Prob>(&u, &params, config)
        }
    };
    let cores = if config.jobs == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| EstimatorError::ThreadPool(e.to_string()))?
            .install(run)?
    };
    let estimates: Vec<BigRational> = cores.iter().map(|c| c.estimate.clone()).collect();
    let estimate = median(&estimates)?;
    Ok(CountOutcome {
        estimate,
        params: Some(params),
        cores,
        certified: !config.float_mode,
        shortcut: None,
    })
}

/// Shortest decimal rendering of a rational that reads back as the same
/// `f64`; exact integers print without a fraction.
pub fn rational_to_decimal(r: &BigRational) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    match r.to_f64() {
        Some(f) if f.is_finite() => format!("{f}"),
        _ => r.round().to_integer().to_string(),
    }
}
