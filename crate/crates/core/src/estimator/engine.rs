//! The layer-by-layer core run.
//!
//! Sample sets never hold words directly. A set belonging to a state of
//! layer `i` lists rows of the layer's sample pool `𝒮^i`; while layer `i` is
//! being processed its sets list extended rows `b · P + row` of `cache'_i`,
//! and once the layer is done those are renumbered into `𝒮^i` in
//! first-insertion order (states in order, replicas ascending, set order).

use rayon::prelude::*;

use crate::automaton::Symbol;
use crate::caching::{compute_cache, decode_first_pred, update_cache, BitMatrix, CacheMatrix, CacheScheme, MaskMatrix};
use crate::exact::{membership, Word};
use crate::probability::{median, trial_key, Bernoulli, Phase, RandomStream, Scalar, StreamKey};
use crate::unrolling::{LayerState, UnrolledNfa, UnrolledState};

use super::{EstimatorError, EstimatorParams, Scheme};

/// Per-replica sets in compressed form: replica `r` owns
/// `items[offsets[r]..offsets[r + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSets {
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl SampleSets {
    fn with_capacity(replicas: usize) -> Self {
        let mut offsets = Vec::with_capacity(replicas + 1);
        offsets.push(0);
        SampleSets {
            offsets,
            items: Vec::new(),
        }
    }

    /// Every replica holds exactly the item `0`.
    pub fn singletons(replicas: usize) -> Self {
        SampleSets {
            offsets: (0..=replicas).collect(),
            items: vec![0; replicas],
        }
    }

    fn push(&mut self, items: &[u32]) {
        self.items.extend_from_slice(items);
        self.offsets.push(self.items.len());
    }

    pub fn replicas(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn get(&self, r: usize) -> &[u32] {
        &self.items[self.offsets[r]..self.offsets[r + 1]]
    }

    /// `Σ_r |S^r|`.
    pub fn total(&self) -> usize {
        self.items.len()
    }

    fn items_mut(&mut self) -> &mut [u32] {
        &mut self.items
    }
}

/// Values computed for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate<S> {
    /// Estimate of `|L(q)|^{-1}`.
    pub p: S,
    /// `1 / p`.
    pub n: S,
    pub rho: S,
    /// Inverted median of means; infinite when the median is zero.
    pub rho_hat: S,
    pub means: Vec<S>,
}

/// Read access to one processed state.
pub struct StateEvent<'a, S> {
    pub state: LayerState,
    pub estimate: &'a StateEstimate<S>,
    /// `Ŝ^r(q)` as extended rows.
    pub hat: &'a SampleSets,
    /// `S^r(q)` as extended rows.
    pub sets: &'a SampleSets,
    /// Running `Σ |S^r(q)|` over all states so far, this one included.
    pub running_total: u64,
    prev_words: &'a [Word],
}

impl<S> StateEvent<'_, S> {
    pub fn word(&self, ext: u32) -> Word {
        extended_word(self.prev_words, ext as usize)
    }

    pub fn hat_words(&self, r: usize) -> Vec<Word> {
        self.hat.get(r).iter().map(|&e| self.word(e)).collect()
    }

    pub fn sample_words(&self, r: usize) -> Vec<Word> {
        self.sets.get(r).iter().map(|&e| self.word(e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStage {
    /// `cache'_i`, rows are the extended pool of layer `i − 1`.
    Prime,
    /// `cache_i`, rows are the pool `𝒮^i`.
    Final,
}

pub struct CacheEvent<'a> {
    pub layer: usize,
    pub stage: CacheStage,
    pub matrix: &'a CacheMatrix,
    words: &'a [Word],
}

impl CacheEvent<'_> {
    pub fn row_word(&self, row: usize) -> Word {
        match self.stage {
            CacheStage::Prime => extended_word(self.words, row),
            CacheStage::Final => self.words[row].clone(),
        }
    }
}

/// Hooks into a core run, for inspection in tests and tools.
pub trait CoreObserver<S> {
    fn state_done(&mut self, _event: &StateEvent<'_, S>) {}
    fn cache_built(&mut self, _event: &CacheEvent<'_>) {}
}

/// Result of one core run.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreOutcome<S> {
    /// `N(q_F)`, or zero after an interrupt.
    pub estimate: S,
    pub interrupted: bool,
    /// Final value of the running sample total.
    pub samples: u64,
}

fn extended_word(words: &[Word], ext: usize) -> Word {
    let p = words.len();
    words[ext % p].extended(Symbol::from_bit(ext >= p))
}

/// Decides, for `w` in the set of the `jb`-th `b`-predecessor of a state,
/// whether that predecessor is the first `b`-predecessor accepting `w`.
trait FirstPred: Sync {
    fn admits(&self, col: usize, state: &UnrolledState, b: Symbol, jb: usize, row: u32) -> bool;
}

struct OracleFirstPred<'a> {
    u: &'a UnrolledNfa,
    layer: usize,
    words: &'a [Word],
}

impl FirstPred for OracleFirstPred<'_> {
    fn admits(&self, _col: usize, state: &UnrolledState, b: Symbol, jb: usize, row: u32) -> bool {
        let w = &self.words[row as usize];
        state.preds_by(b)[..jb]
            .iter()
            .all(|&l| !membership(self.u, w, LayerState::new(self.layer - 1, l as usize)))
    }
}

struct BitsFirstPred<'a> {
    prev: &'a BitMatrix,
}

impl FirstPred for BitsFirstPred<'_> {
    fn admits(&self, _col: usize, state: &UnrolledState, b: Symbol, jb: usize, row: u32) -> bool {
        state.preds_by(b)[..jb]
            .iter()
            .all(|&l| !self.prev.get(row as usize, l as usize))
    }
}

struct MasksFirstPred<'a> {
    prime: &'a MaskMatrix,
    pool: usize,
}

impl FirstPred for MasksFirstPred<'_> {
    fn admits(&self, col: usize, state: &UnrolledState, b: Symbol, jb: usize, row: u32) -> bool {
        let entry = self.prime.entry(b.index() * self.pool + row as usize, col);
        decode_first_pred(entry, state.preds_by(b).len()) == Some(jb + 1)
    }
}

/// `union` on row ids: `b · pool + w` for every `w` of the `jb`-th
/// `b`-predecessor's set that the oracle admits, sorted.
fn union_rows<O: FirstPred>(
    oracle: &O,
    col: usize,
    state: &UnrolledState,
    bar: &[Vec<u32>],
    pool: usize,
    out: &mut Vec<u32>,
) {
    out.clear();
    for b in Symbol::ALL {
        let shift = (b.index() * pool) as u32;
        for (jb, &pos) in state.pred_positions_by(b).iter().enumerate() {
            for &w in &bar[pos as usize] {
                if oracle.admits(col, state, b, jb, w) {
                    out.push(shift + w);
                }
            }
        }
    }
    out.sort_unstable();
    debug_assert!(out.windows(2).all(|p| p[0] < p[1]), "union produced a duplicate");
}

/// Keeps each item independently with the sampler's probability.
pub(crate) fn reduce_into<T: Copy>(items: &[T], sampler: &Bernoulli, stream: &mut RandomStream, out: &mut Vec<T>) {
    out.clear();
    match sampler {
        Bernoulli::Always => out.extend_from_slice(items),
        Bernoulli::Never => {}
        _ => out.extend(items.iter().copied().filter(|_| sampler.sample(stream))),
    }
}

const REPLICA_CHUNK: usize = 64;

pub(crate) struct StateInput<'a, S> {
    pub trial_key: [u64; 2],
    pub trial: u64,
    pub layer: usize,
    pub col: usize,
    pub n_s: usize,
    pub n_t: usize,
    /// Indexed by position in `pred(q)`.
    pub pred_estimates: Vec<&'a S>,
    pub pred_sets: Vec<&'a SampleSets>,
    pub pool: usize,
}

/// `estimateAndSample` for one state, on row ids.
fn process_state<S: Scalar, O: FirstPred>(
    input: &StateInput<'_, S>,
    state: &UnrolledState,
    oracle: &O,
) -> Result<(StateEstimate<S>, SampleSets, SampleSets), EstimatorError> {
    let replicas = input.n_s * input.n_t;
    let rho = input
        .pred_estimates
        .iter()
        .skip(1)
        .fold(input.pred_estimates[0].clone(), |acc, p| acc.min_of(p));
    let ratios = input
        .pred_estimates
        .iter()
        .map(|p| rho.div(p).sampler())
        .collect::<Result<Vec<_>, _>>()?;

    let key = |r: usize, phase: Phase, item: usize| {
        StreamKey::new(
            input.trial,
            input.layer as u32,
            input.col as u32,
            r as u64,
            phase,
            item as u64,
        )
    };

    let chunks = replicas.div_ceil(REPLICA_CHUNK);
    let hat_chunks: Vec<SampleSets> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * REPLICA_CHUNK..((c + 1) * REPLICA_CHUNK).min(replicas);
            let mut out = SampleSets::with_capacity(range.len());
            let mut bar: Vec<Vec<u32>> = vec![Vec::new(); ratios.len()];
            let mut hat = Vec::new();
            for r in range {
                // one stream per replica, consumed predecessor by predecessor
                let mut stream = RandomStream::with_trial_key(input.trial_key, &key(r, Phase::Normalize, 0));
                for (pos, sampler) in ratios.iter().enumerate() {
                    reduce_into(input.pred_sets[pos].get(r), sampler, &mut stream, &mut bar[pos]);
                }
                union_rows(oracle, input.col, state, &bar, input.pool, &mut hat);
                out.push(&hat);
            }
            out
        })
        .collect();
    let mut hat = SampleSets::with_capacity(replicas);
    for chunk in &hat_chunks {
        for r in 0..chunk.replicas() {
            hat.push(chunk.get(r));
        }
    }
    drop(hat_chunks);

    let scale = S::from_u64(input.n_s as u64).mul(&rho);
    let means: Vec<S> = (0..input.n_t)
        .map(|j| {
            let sum: usize = (j * input.n_s..(j + 1) * input.n_s).map(|r| hat.get(r).len()).sum();
            S::from_u64(sum as u64).div(&scale)
        })
        .collect();
    let rho_hat = median(&means)?.invert();
    let p = rho.min_of(&rho_hat);
    let n = p.invert();
    let thin = p.div(&rho).sampler()?;

    let set_chunks: Vec<SampleSets> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * REPLICA_CHUNK..((c + 1) * REPLICA_CHUNK).min(replicas);
            let mut out = SampleSets::with_capacity(range.len());
            let mut kept = Vec::new();
            for r in range {
                let mut stream = RandomStream::with_trial_key(input.trial_key, &key(r, Phase::Thin, 0));
                reduce_into(hat.get(r), &thin, &mut stream, &mut kept);
                out.push(&kept);
            }
            out
        })
        .collect();
    let mut sets = SampleSets::with_capacity(replicas);
    for chunk in &set_chunks {
        for r in 0..chunk.replicas() {
            sets.push(chunk.get(r));
        }
    }

    Ok((
        StateEstimate {
            p,
            n,
            rho,
            rho_hat,
            means,
        },
        hat,
        sets,
    ))
}

/// `estimateAndSample` on explicit words. `pred_sets[i][r]` is `S^r(q_i)` for
/// the `i`-th entry of `pred(q)`; membership is resolved by the oracle.
pub(crate) fn process_state_words<S: Scalar>(
    u: &UnrolledNfa,
    q: LayerState,
    pred_estimates: &[S],
    pred_sets: &[Vec<Vec<Word>>],
    n_s: usize,
    n_t: usize,
    seed: u64,
    trial: u64,
) -> Result<(StateEstimate<S>, Vec<Vec<Word>>), EstimatorError> {
    let state = u.state(q);
    let k = state.preds().len();
    if pred_estimates.len() != k || pred_sets.len() != k {
        return Err(EstimatorError::PredecessorMismatch {
            expected: k,
            found: pred_estimates.len().min(pred_sets.len()),
        });
    }
    let replicas = n_s * n_t;
    let mut words: Vec<Word> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut families = Vec::with_capacity(k);
    for (pos, sets) in pred_sets.iter().enumerate() {
        if sets.len() != replicas {
            return Err(EstimatorError::ReplicaMismatch {
                expected: replicas,
                found: sets.len(),
            });
        }
        let pred = LayerState::new(q.layer - 1, state.preds()[pos] as usize);
        let mut family = SampleSets::with_capacity(replicas);
        for set in sets {
            let mut rows = Vec::with_capacity(set.len());
            for w in set {
                if !membership(u, w, pred) {
                    return Err(EstimatorError::CorruptSample(w.clone()));
                }
                let row = *index.entry(w.clone()).or_insert_with(|| {
                    words.push(w.clone());
                    words.len() as u32 - 1
                });
                rows.push(row);
            }
            family.push(&rows);
        }
        families.push(family);
    }
    let input = StateInput {
        trial_key: trial_key(seed, trial),
        trial,
        layer: q.layer,
        col: q.index,
        n_s,
        n_t,
        pred_estimates: pred_estimates.iter().collect(),
        pred_sets: families.iter().collect(),
        pool: words.len(),
    };
    let oracle = OracleFirstPred {
        u,
        layer: q.layer,
        words: &words,
    };
    let (estimate, _, sets) = process_state(&input, state, &oracle)?;
    let sets = (0..replicas)
        .map(|r| sets.get(r).iter().map(|&e| extended_word(&words, e as usize)).collect())
        .collect();
    Ok((estimate, sets))
}

struct LayerData<S> {
    estimates: Vec<StateEstimate<S>>,
    sets: Vec<SampleSets>,
}

/// One run of the core procedure (trial `trial` of master seed `seed`).
pub fn count_nfa_core<S: Scalar>(
    u: &UnrolledNfa,
    params: &EstimatorParams,
    scheme: Scheme,
    seed: u64,
    trial: u64,
    mut observer: Option<&mut dyn CoreObserver<S>>,
) -> Result<CoreOutcome<S>, EstimatorError> {
    let final_state = u.final_state().ok_or(EstimatorError::EmptySlice)?;
    let replicas = params.replicas();
    let theta = params.theta_ceil();
    let key = trial_key(seed, trial);
    let cache_scheme = match scheme {
        Scheme::Reference => None,
        Scheme::Cache1 => Some(CacheScheme::Bits),
        Scheme::Cache2 => Some(CacheScheme::Masks),
    };

    let one = S::one();
    let mut prev = LayerData {
        estimates: vec![StateEstimate {
            p: one.clone(),
            n: one.clone(),
            rho: one.clone(),
            rho_hat: one.clone(),
            means: Vec::new(),
        }],
        sets: vec![SampleSets::singletons(replicas)],
    };
    let mut words = vec![Word::empty()];
    let mut cache = cache_scheme.map(|_| BitMatrix::unit());
    let mut total = replicas as u64;
    if total >= theta {
        return Ok(CoreOutcome {
            estimate: S::zero(),
            interrupted: true,
            samples: total,
        });
    }

    for layer in 1..=u.n() {
        let pool = words.len();
        if pool >= (u32::MAX / 2) as usize {
            return Err(EstimatorError::PoolOverflow(pool));
        }
        let prime = match (cache_scheme, &cache) {
            (Some(cs), Some(prev_cache)) => Some(compute_cache(u, layer, prev_cache, cs)?),
            _ => None,
        };
        if let (Some(obs), Some(m)) = (observer.as_deref_mut(), &prime) {
            obs.cache_built(&CacheEvent {
                layer,
                stage: CacheStage::Prime,
                matrix: m,
                words: &words,
            });
        }

        let mut current = LayerData {
            estimates: Vec::with_capacity(u.layer_len(layer)),
            sets: Vec::with_capacity(u.layer_len(layer)),
        };
        for (col, state) in u.layer(layer).iter().enumerate() {
            let input = StateInput {
                trial_key: key,
                trial,
                layer,
                col,
                n_s: params.n_s as usize,
                n_t: params.n_t as usize,
                pred_estimates: state.preds().iter().map(|&p| &prev.estimates[p as usize].p).collect(),
                pred_sets: state.preds().iter().map(|&p| &prev.sets[p as usize]).collect(),
                pool,
            };
            let (estimate, hat, sets) = match (&prime, &cache) {
                (None, _) => process_state(
                    &input,
                    state,
                    &OracleFirstPred {
                        u,
                        layer,
                        words: &words,
                    },
                )?,
                (Some(CacheMatrix::Bits(_)), Some(prev_cache)) => {
                    process_state(&input, state, &BitsFirstPred { prev: prev_cache })?
                }
                (Some(CacheMatrix::Masks(m)), _) => process_state(&input, state, &MasksFirstPred { prime: m, pool })?,
                (Some(_), None) => unreachable!("caching schemes keep cache_(i-1)"),
            };
            total += sets.total() as u64;
            if let Some(obs) = observer.as_deref_mut() {
                obs.state_done(&StateEvent {
                    state: LayerState::new(layer, col),
                    estimate: &estimate,
                    hat: &hat,
                    sets: &sets,
                    running_total: total,
                    prev_words: &words,
                });
            }
            if total >= theta {
                return Ok(CoreOutcome {
                    estimate: S::zero(),
                    interrupted: true,
                    samples: total,
                });
            }
            current.estimates.push(estimate);
            current.sets.push(sets);
        }

        // Renumber extended rows into the new pool, in first-insertion order.
        let mut renumber = vec![u32::MAX; 2 * pool];
        let mut sampled: Vec<u32> = Vec::new();
        for sets in &mut current.sets {
            for item in sets.items_mut() {
                let slot = &mut renumber[*item as usize];
                if *slot == u32::MAX {
                    *slot = sampled.len() as u32;
                    sampled.push(*item);
                }
                *item = *slot;
            }
        }
        let next_words: Vec<Word> = sampled.iter().map(|&e| extended_word(&words, e as usize)).collect();
        if let Some(m) = &prime {
            let next_cache = update_cache(m, &sampled)?;
            if let Some(obs) = observer.as_deref_mut() {
                obs.cache_built(&CacheEvent {
                    layer,
                    stage: CacheStage::Final,
                    matrix: &CacheMatrix::Bits(next_cache.clone()),
                    words: &next_words,
                });
            }
            cache = Some(next_cache);
        }
        words = next_words;
        prev = current;
    }

    Ok(CoreOutcome {
        estimate: prev.estimates[final_state.index].n.clone(),
        interrupted: false,
        samples: total,
    })
}
