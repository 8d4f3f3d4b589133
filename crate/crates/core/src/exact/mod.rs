//! Exact oracles over an unrolled automaton: membership, two independent
//! counting procedures, derivation runs and the divergence classes built
//! from them.
//!
//! Everything here is deterministic and never approximates. Procedures whose
//! cost is exponential refuse to run past a hard guard instead of truncating.

mod word;

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::automaton::Symbol;
use crate::unrolling::{LayerState, UnrolledNfa};

pub use word::{ParseWordError, Word};

/// Largest word length accepted by the enumeration oracles.
pub const MAX_ENUM_LENGTH: usize = 24;
/// Largest number of distinct reachable subsets per layer for the subset DP.
pub const MAX_DP_SUBSETS: usize = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactError {
    #[error("enumeration over 2^{0} words exceeds the guard of 2^{MAX_ENUM_LENGTH}")]
    EnumerationGuard(usize),
    #[error("subset construction exceeds {MAX_DP_SUBSETS} subsets at layer {0}")]
    SubsetGuard(usize),
    #[error("word {0} is not accepted by the given state")]
    NotAccepted(Word),
    #[error("word of length {word} does not match layer {layer}")]
    LengthMismatch { word: usize, layer: usize },
    #[error("prefix depth {depth} exceeds layer {layer}")]
    DepthOutOfRange { depth: usize, layer: usize },
    #[error("the length-n slice is empty")]
    EmptySlice,
}

impl ExactError {
    pub fn code(&self) -> &'static str {
        match self {
            ExactError::EnumerationGuard(_) => "enumeration_guard",
            ExactError::SubsetGuard(_) => "subset_guard",
            ExactError::NotAccepted(_) => "not_accepted",
            ExactError::LengthMismatch { .. } => "length_mismatch",
            ExactError::DepthOutOfRange { .. } => "depth_out_of_range",
            ExactError::EmptySlice => "empty_slice",
        }
    }
}

/// Layer-by-layer reachable sets of `w`: entry `ℓ` marks the states of layer
/// `ℓ` reached by the first `ℓ` symbols.
pub fn reachable_sets(u: &UnrolledNfa, w: &Word) -> Vec<Vec<bool>> {
    assert!(w.len() <= u.n(), "word longer than the unrolling");
    let mut sets = Vec::with_capacity(w.len() + 1);
    sets.push(vec![true]);
    for (l, b) in w.symbols().enumerate() {
        let prev: &Vec<bool> = &sets[l];
        let next = u
            .layer(l + 1)
            .iter()
            .map(|s| s.preds_by(b).iter().any(|&p| prev[p as usize]))
            .collect();
        sets.push(next);
    }
    sets
}

/// `w ∈ L(q)`, by forward reachability through the layers.
pub fn membership(u: &UnrolledNfa, w: &Word, q: LayerState) -> bool {
    if w.len() != q.layer {
        return false;
    }
    let mut current = vec![true];
    for (l, b) in w.symbols().enumerate() {
        current = u
            .layer(l + 1)
            .iter()
            .map(|s| s.preds_by(b).iter().any(|&p| current[p as usize]))
            .collect();
    }
    current[q.index]
}

/// `|L_n|` by testing each of the `2^n` words.
pub fn count_exact_enum(u: &UnrolledNfa) -> Result<BigUint, ExactError> {
    let n = u.n();
    if n > MAX_ENUM_LENGTH {
        return Err(ExactError::EnumerationGuard(n));
    }
    let Some(f) = u.final_state() else {
        return Ok(BigUint::zero());
    };
    let count = Word::all(n).filter(|w| membership(u, w, f)).count();
    Ok(BigUint::from(count))
}

type Subset = Vec<u64>;

fn subset_step(u: &UnrolledNfa, layer: usize, from: &Subset, b: Symbol) -> Subset {
    let states = u.layer(layer);
    let mut out = vec![0u64; states.len().div_ceil(64).max(1)];
    for (i, s) in states.iter().enumerate() {
        if s.preds_by(b)
            .iter()
            .any(|&p| from[p as usize / 64] >> (p % 64) & 1 == 1)
        {
            out[i / 64] |= 1 << (i % 64);
        }
    }
    out
}

/// For each layer, the map from reachable subset to the number of words of
/// that length whose reachable set is exactly that subset.
fn subset_layers(u: &UnrolledNfa) -> Result<Vec<HashMap<Subset, BigUint>>, ExactError> {
    let mut layers = Vec::with_capacity(u.n() + 1);
    let mut current: HashMap<Subset, BigUint> = HashMap::new();
    current.insert(vec![1], BigUint::one());
    layers.push(current.clone());
    for l in 1..=u.n() {
        let mut next: HashMap<Subset, BigUint> = HashMap::new();
        for (subset, count) in &current {
            for b in Symbol::ALL {
                let s = subset_step(u, l, subset, b);
                if s.iter().all(|&x| x == 0) {
                    continue;
                }
                *next.entry(s).or_default() += count;
            }
            if next.len() > MAX_DP_SUBSETS {
                return Err(ExactError::SubsetGuard(l));
            }
        }
        layers.push(next.clone());
        current = next;
    }
    Ok(layers)
}

/// `|L_n|` by dynamic programming over reachable subsets of each layer.
pub fn count_exact_dp(u: &UnrolledNfa) -> Result<BigUint, ExactError> {
    let Some(f) = u.final_state() else {
        return Ok(BigUint::zero());
    };
    let layers = subset_layers(u)?;
    Ok(layers[u.n()]
        .iter()
        .filter(|(s, _)| s[f.index / 64] >> (f.index % 64) & 1 == 1)
        .map(|(_, c)| c)
        .sum())
}

/// `|L(q)|` for every layer-state, indexed `[layer][index]`.
pub fn state_language_sizes(u: &UnrolledNfa) -> Result<Vec<Vec<BigUint>>, ExactError> {
    let layers = subset_layers(u)?;
    Ok(layers
        .iter()
        .enumerate()
        .map(|(l, map)| {
            let mut sizes = vec![BigUint::zero(); u.layer_len(l)];
            for (subset, count) in map {
                for (i, size) in sizes.iter_mut().enumerate() {
                    if subset[i / 64] >> (i % 64) & 1 == 1 {
                        *size += count;
                    }
                }
            }
            sizes
        })
        .collect())
}

/// `L(q)` listed by enumeration.
pub fn language(u: &UnrolledNfa, q: LayerState) -> Result<Vec<Word>, ExactError> {
    if q.layer > MAX_ENUM_LENGTH {
        return Err(ExactError::EnumerationGuard(q.layer));
    }
    Ok(Word::all(q.layer).filter(|w| membership(u, w, q)).collect())
}

/// The derivation run of a word: states `q_0 = q_I, …, q_k = q` where each
/// step back picks the first predecessor (in state order) accepting the
/// remaining prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationRun {
    states: Vec<LayerState>,
    word: Word,
}

impl DerivationRun {
    pub fn states(&self) -> &[LayerState] {
        &self.states
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    pub fn last(&self) -> LayerState {
        *self.states.last().expect("runs start at the initial state")
    }
}

pub fn derivation_run(u: &UnrolledNfa, w: &Word, q: LayerState) -> Result<DerivationRun, ExactError> {
    if w.len() != q.layer {
        return Err(ExactError::LengthMismatch {
            word: w.len(),
            layer: q.layer,
        });
    }
    let reach = reachable_sets(u, w);
    if !reach[q.layer][q.index] {
        return Err(ExactError::NotAccepted(w.clone()));
    }
    let mut states = vec![q; q.layer + 1];
    let mut current = q;
    for l in (1..=q.layer).rev() {
        let b = w.get(l - 1);
        let first = u
            .state(current)
            .preds_by(b)
            .iter()
            .copied()
            .find(|&p| reach[l - 1][p as usize])
            .expect("reachable state has an accepting predecessor");
        current = LayerState::new(l - 1, first as usize);
        states[l - 1] = current;
    }
    Ok(DerivationRun {
        states,
        word: w.clone(),
    })
}

/// Number of states in the longest common prefix of two runs from `q_I`.
fn common_prefix_len(r1: &DerivationRun, r2: &DerivationRun) -> usize {
    let mut k = 1;
    let limit = r1.states.len().min(r2.states.len());
    while k < limit && r1.states[k] == r2.states[k] && r1.word.get(k - 1) == r2.word.get(k - 1) {
        k += 1;
    }
    k
}

/// Last common prefix state: the deepest state up to which both runs agree
/// (states and transition symbols).
pub fn lcps(r1: &DerivationRun, r2: &DerivationRun) -> LayerState {
    r1.states[common_prefix_len(r1, r2) - 1]
}

/// `I(w, q, ℓ)`: the words of `L(q)` whose derivation run shares exactly
/// the first `ℓ + 1` states with that of `w`, in increasing order.
pub fn divergence_class(
    u: &UnrolledNfa,
    w: &Word,
    q: LayerState,
    depth: usize,
) -> Result<Vec<Word>, ExactError> {
    if depth > q.layer {
        return Err(ExactError::DepthOutOfRange {
            depth,
            layer: q.layer,
        });
    }
    let run = derivation_run(u, w, q)?;
    let mut class = Vec::new();
    for other in language(u, q)? {
        let r = derivation_run(u, &other, q)?;
        if common_prefix_len(&run, &r) == depth + 1 {
            class.push(other);
        }
    }
    Ok(class)
}
