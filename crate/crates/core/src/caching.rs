//! Per-layer membership caches.
//!
//! `cache_i` has one row per word of the layer's sample pool and one column
//! per layer-state; entry `(w, q)` records whether `w ∈ L(q)`. Before a layer
//! is processed, `cache'_i` is obtained from `cache_{i−1}` by the stacked
//! product `[cache_{i−1} × T⁰ ; cache_{i−1} × T¹]`, so its rows are the pool
//! words extended by `0` followed by the pool words extended by `1`.
//!
//! Scheme 1 keeps boolean entries. Scheme 2 keeps, for each extended word and
//! state, the set of `b`-predecessors accepting the prefix as a bitmask: the
//! `j`-th of `k` predecessors sets bit `k − j`. The highest set bit then names
//! the first accepting predecessor.
//!
//! Extended rows are addressed by `b · P + row` where `P` is the number of
//! rows of `cache_{i−1}`.

use rayon::prelude::*;
use thiserror::Error;

use crate::automaton::Symbol;
use crate::exact::{membership, Word};
use crate::unrolling::{LayerState, UnrolledNfa};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("matrix has {found} columns, layer {layer} has {expected} states")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("word {0} has no row in the cache")]
    MissingRow(Word),
    #[error("extended row {row} is out of range for {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
}

impl CacheError {
    pub fn code(&self) -> &'static str {
        match self {
            CacheError::DimensionMismatch { .. } => "cache_dimension_mismatch",
            CacheError::MissingRow(_) => "cache_missing_row",
            CacheError::RowOutOfRange { .. } => "cache_row_out_of_range",
        }
    }
}

/// Which membership cache the estimator maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheScheme {
    /// Boolean caches, union scans earlier predecessors in `cache_{i−1}`.
    Bits,
    /// Predecessor bitmasks in `cache'_i`, union reads one entry.
    Masks,
}

fn lanes_for(bits: usize) -> usize {
    bits.div_ceil(64).max(1)
}

/// Row-major bit-packed boolean matrix.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    lanes: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let lanes = lanes_for(cols);
        BitMatrix {
            rows,
            cols,
            lanes,
            data: vec![0; rows * lanes],
        }
    }

    /// `cache_0`: the 1×1 matrix `(1)`.
    pub fn unit() -> Self {
        let mut m = BitMatrix::zeros(1, 1);
        m.set(0, 0, true);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.lanes + col / 64] >> (col % 64) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.rows && col < self.cols);
        let lane = &mut self.data[row * self.lanes + col / 64];
        if value {
            *lane |= 1 << (col % 64);
        } else {
            *lane &= !(1 << (col % 64));
        }
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[u64] {
        &self.data[row * self.lanes..(row + 1) * self.lanes]
    }
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let line: String = (0..self.cols).map(|c| if self.get(r, c) { '1' } else { '0' }).collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Scheme-2 intermediate matrix: each entry is a predecessor bitmask of
/// `lanes` words, least significant lane first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    lanes: usize,
    data: Vec<u64>,
}

impl MaskMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> &[u64] {
        let at = (row * self.cols + col) * self.lanes;
        &self.data[at..at + self.lanes]
    }

    pub fn is_nonzero(&self, row: usize, col: usize) -> bool {
        self.entry(row, col).iter().any(|&l| l != 0)
    }
}

/// A layer cache in either representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheMatrix {
    Bits(BitMatrix),
    Masks(MaskMatrix),
}

impl CacheMatrix {
    pub fn rows(&self) -> usize {
        match self {
            CacheMatrix::Bits(m) => m.rows(),
            CacheMatrix::Masks(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            CacheMatrix::Bits(m) => m.cols(),
            CacheMatrix::Masks(m) => m.cols(),
        }
    }

    /// Whether entry `(row, col)` records membership.
    pub fn accepts(&self, row: usize, col: usize) -> bool {
        match self {
            CacheMatrix::Bits(m) => m.get(row, col),
            CacheMatrix::Masks(m) => m.is_nonzero(row, col),
        }
    }

    pub fn as_bits(&self) -> Option<&BitMatrix> {
        match self {
            CacheMatrix::Bits(m) => Some(m),
            CacheMatrix::Masks(_) => None,
        }
    }

    pub fn as_masks(&self) -> Option<&MaskMatrix> {
        match self {
            CacheMatrix::Bits(_) => None,
            CacheMatrix::Masks(m) => Some(m),
        }
    }
}

/// The `b`-transition matrix between layers `i − 1` and `i`, stored by
/// column as the ordered `b`-predecessor list.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    symbol: Symbol,
    rows: usize,
    columns: Vec<Vec<u32>>,
}

impl TransitionMatrix {
    pub fn new(u: &UnrolledNfa, layer: usize, b: Symbol) -> Self {
        assert!(layer >= 1 && layer <= u.n());
        TransitionMatrix {
            symbol: b,
            rows: u.layer_len(layer - 1),
            columns: u.layer(layer).iter().map(|s| s.preds_by(b).to_vec()).collect(),
        }
    }

    pub fn symbol(&self) -> Symbol {
        self.symbol
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    /// Scheme 1 entry: whether `row` is a `b`-predecessor of `col`.
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.columns[col].binary_search(&(row as u32)).is_ok()
    }

    /// Scheme 2 entry as an exponent: `Some(k − j)` when `row` is the `j`-th
    /// of the `k` `b`-predecessors of `col`.
    pub fn exponent(&self, row: usize, col: usize) -> Option<usize> {
        let preds = &self.columns[col];
        preds
            .binary_search(&(row as u32))
            .ok()
            .map(|pos| preds.len() - 1 - pos)
    }

    pub fn column(&self, col: usize) -> &[u32] {
        &self.columns[col]
    }
}

/// Index `j` (1-based) of the first accepting predecessor encoded in a
/// scheme-2 entry, or `None` when the entry is zero.
pub fn decode_first_pred(entry: &[u64], k: usize) -> Option<usize> {
    let (lane, bits) = entry.iter().enumerate().rev().find(|(_, &l)| l != 0)?;
    let top = lane * 64 + 63 - bits.leading_zeros() as usize;
    assert!(top < k, "entry has a bit beyond {k} predecessors");
    Some(k - top)
}

const ROW_BLOCK: usize = 256;

/// `cache'_i` from `cache_{i−1}`.
pub fn compute_cache(
    u: &UnrolledNfa,
    layer: usize,
    prev: &BitMatrix,
    scheme: CacheScheme,
) -> Result<CacheMatrix, CacheError> {
    if prev.cols() != u.layer_len(layer - 1) {
        return Err(CacheError::DimensionMismatch {
            layer: layer - 1,
            expected: u.layer_len(layer - 1),
            found: prev.cols(),
        });
    }
    let transitions = Symbol::ALL.map(|b| TransitionMatrix::new(u, layer, b));
    let cols = u.layer_len(layer);
    let p = prev.rows();
    Ok(match scheme {
        CacheScheme::Bits => {
            // Column masks over the previous layer turn each entry into a
            // lane-wise AND of the previous row with the predecessor set.
            let col_masks: Vec<Vec<Vec<u64>>> = transitions
                .iter()
                .map(|t| {
                    (0..cols)
                        .map(|c| {
                            let mut mask = vec![0u64; prev.lanes];
                            for &q in t.column(c) {
                                mask[q as usize / 64] |= 1 << (q % 64);
                            }
                            mask
                        })
                        .collect()
                })
                .collect();
            let mut out = BitMatrix::zeros(2 * p, cols);
            let lanes = out.lanes;
            out.data
                .par_chunks_mut(ROW_BLOCK * lanes)
                .enumerate()
                .for_each(|(block, chunk)| {
                    for (offset, row) in chunk.chunks_mut(lanes).enumerate() {
                        let ext = block * ROW_BLOCK + offset;
                        let (b, w) = (ext / p, ext % p);
                        let source = prev.row(w);
                        for (c, mask) in col_masks[b].iter().enumerate() {
                            if source.iter().zip(mask).any(|(x, y)| x & y != 0) {
                                row[c / 64] |= 1 << (c % 64);
                            }
                        }
                    }
                });
            CacheMatrix::Bits(out)
        }
        CacheScheme::Masks => {
            let max_k = transitions
                .iter()
                .flat_map(|t| (0..cols).map(move |c| t.column(c).len()))
                .max()
                .unwrap_or(0);
            let lanes = lanes_for(max_k);
            let entry_words = cols * lanes;
            let mut data = vec![0u64; 2 * p * entry_words];
            data.par_chunks_mut(ROW_BLOCK * entry_words.max(1))
                .enumerate()
                .for_each(|(block, chunk)| {
                    for (offset, row) in chunk.chunks_mut(entry_words.max(1)).enumerate() {
                        let ext = block * ROW_BLOCK + offset;
                        let (b, w) = (ext / p, ext % p);
                        let t = &transitions[b];
                        for c in 0..cols {
                            let preds = t.column(c);
                            let k = preds.len();
                            for (pos, &q) in preds.iter().enumerate() {
                                if prev.get(w, q as usize) {
                                    let bit = k - 1 - pos;
                                    row[c * lanes + bit / 64] |= 1 << (bit % 64);
                                }
                            }
                        }
                    }
                });
            CacheMatrix::Masks(MaskMatrix {
                rows: 2 * p,
                cols,
                lanes,
                data,
            })
        }
    })
}

/// `cache_i`: the rows of `cache'_i` listed in `sampled` (extended row ids,
/// in pool order), with non-zero entries replaced by `1`.
pub fn update_cache(prime: &CacheMatrix, sampled: &[u32]) -> Result<BitMatrix, CacheError> {
    let rows = prime.rows();
    if let Some(&bad) = sampled.iter().find(|&&r| r as usize >= rows) {
        return Err(CacheError::RowOutOfRange {
            row: bad as usize,
            rows,
        });
    }
    Ok(match prime {
        CacheMatrix::Bits(m) => {
            let mut out = BitMatrix::zeros(sampled.len(), m.cols());
            for (i, &r) in sampled.iter().enumerate() {
                out.data[i * out.lanes..(i + 1) * out.lanes].copy_from_slice(m.row(r as usize));
            }
            out
        }
        CacheMatrix::Masks(m) => {
            let mut out = BitMatrix::zeros(sampled.len(), m.cols());
            for (i, &r) in sampled.iter().enumerate() {
                for c in 0..m.cols() {
                    if m.is_nonzero(r as usize, c) {
                        out.set(i, c, true);
                    }
                }
            }
            out
        }
    })
}

/// Membership as seen through the caches: `cache_{i−1}` over a word pool and
/// the matching `cache'_i`, with the pool's words for lookups by value.
#[derive(Debug, Clone)]
pub struct CacheContext {
    layer: usize,
    scheme: CacheScheme,
    rows: Vec<Word>,
    index: std::collections::HashMap<Word, u32>,
    prev: BitMatrix,
    prime: CacheMatrix,
}

impl CacheContext {
    /// Builds `cache_{i−1}` over `rows` (the words of `𝒮^{i−1}`) from the
    /// membership oracle, then `cache'_i` by [`compute_cache`].
    pub fn from_oracle(u: &UnrolledNfa, layer: usize, rows: Vec<Word>, scheme: CacheScheme) -> Self {
        assert!(layer >= 1 && layer <= u.n());
        let cols = u.layer_len(layer - 1);
        let mut prev = BitMatrix::zeros(rows.len(), cols);
        for (r, w) in rows.iter().enumerate() {
            for c in 0..cols {
                if membership(u, w, LayerState::new(layer - 1, c)) {
                    prev.set(r, c, true);
                }
            }
        }
        Self::new(u, layer, rows, prev, scheme).expect("dimensions match by construction")
    }

    pub fn new(
        u: &UnrolledNfa,
        layer: usize,
        rows: Vec<Word>,
        prev: BitMatrix,
        scheme: CacheScheme,
    ) -> Result<Self, CacheError> {
        let prime = compute_cache(u, layer, &prev, scheme)?;
        let index = rows.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Ok(CacheContext {
            layer,
            scheme,
            rows,
            index,
            prev,
            prime,
        })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn scheme(&self) -> CacheScheme {
        self.scheme
    }

    pub fn prev(&self) -> &BitMatrix {
        &self.prev
    }

    pub fn prime(&self) -> &CacheMatrix {
        &self.prime
    }

    pub fn row_of(&self, w: &Word) -> Result<u32, CacheError> {
        self.index.get(w).copied().ok_or_else(|| CacheError::MissingRow(w.clone()))
    }

    /// Word of extended row `ext`.
    pub fn extended_word(&self, ext: usize) -> Word {
        let p = self.rows.len();
        self.rows[ext % p].extended(Symbol::from_bit(ext >= p))
    }
}

/// `union(q, S_1, …, S_k)` answered from the caches: `w · b` is kept iff `w`
/// came from the first `b`-predecessor of `q` whose language contains `w`.
/// `sets[i]` belongs to the `i`-th entry of `pred(q)`. The result is sorted.
pub fn union_cached(
    u: &UnrolledNfa,
    q: LayerState,
    sets: &[Vec<Word>],
    ctx: &CacheContext,
) -> Result<Vec<Word>, CacheError> {
    assert_eq!(q.layer, ctx.layer, "state is not in the cached layer");
    let state = u.state(q);
    assert_eq!(sets.len(), state.preds().len(), "one set per predecessor");
    let p = ctx.rows.len();
    let mut out = Vec::new();
    for b in Symbol::ALL {
        let preds = state.preds_by(b);
        for (jb, &pos) in state.pred_positions_by(b).iter().enumerate() {
            for w in &sets[pos as usize] {
                let row = ctx.row_of(w)? as usize;
                let keep = match &ctx.prime {
                    CacheMatrix::Bits(_) => preds[..jb].iter().all(|&l| !ctx.prev.get(row, l as usize)),
                    CacheMatrix::Masks(m) => {
                        decode_first_pred(m.entry(b.index() * p + row, q.index), preds.len()) == Some(jb + 1)
                    }
                };
                if keep {
                    out.push(w.extended(b));
                }
            }
        }
    }
    out.sort();
    Ok(out)
}
