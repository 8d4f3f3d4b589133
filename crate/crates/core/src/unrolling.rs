//! The layered acyclic form of an automaton for a fixed word length `n`.
//!
//! Layer `ℓ` holds one layer-state per original state reachable by some
//! word of length `ℓ`, kept in original declaration order. Within a layer a
//! state is addressed by its dense index, so the order on layer-states is
//! (layer, declaration order).

use serde::Serialize;

use crate::automaton::{NormalizedNfa, Symbol};

/// A state of the unrolled automaton: dense `index` within `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerState {
    pub layer: usize,
    pub index: usize,
}

impl LayerState {
    pub fn new(layer: usize, index: usize) -> Self {
        LayerState { layer, index }
    }
}

/// One layer-state with its predecessor lists (dense indices into the
/// previous layer, strictly increasing).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrolledState {
    original: usize,
    preds: Vec<u32>,
    pred_by_symbol: [Vec<u32>; 2],
    // Position of each b-predecessor inside `preds`.
    pred_pos_by_symbol: [Vec<u32>; 2],
}

impl UnrolledState {
    /// Id of the state in the normalized automaton.
    pub fn original(&self) -> usize {
        self.original
    }

    /// `pred(q)`: every predecessor regardless of symbol.
    pub fn preds(&self) -> &[u32] {
        &self.preds
    }

    /// `pred(q, b)`.
    pub fn preds_by(&self, b: Symbol) -> &[u32] {
        &self.pred_by_symbol[b.index()]
    }

    /// For each element of `pred(q, b)`, its position in `pred(q)`.
    pub fn pred_positions_by(&self, b: Symbol) -> &[u32] {
        &self.pred_pos_by_symbol[b.index()]
    }
}

#[derive(Debug, Clone)]
pub struct UnrolledNfa {
    n: usize,
    layers: Vec<Vec<UnrolledState>>,
    final_index: Option<usize>,
    original_states: usize,
    names: Vec<String>,
}

impl UnrolledNfa {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &[UnrolledState] {
        &self.layers[layer]
    }

    pub fn layer_len(&self, layer: usize) -> usize {
        self.layers[layer].len()
    }

    pub fn state(&self, q: LayerState) -> &UnrolledState {
        &self.layers[q.layer][q.index]
    }

    pub fn initial(&self) -> LayerState {
        LayerState::new(0, 0)
    }

    /// `q_F^n`, present iff the length-`n` slice is non-empty.
    pub fn final_state(&self) -> Option<LayerState> {
        self.final_index.map(|i| LayerState::new(self.n, i))
    }

    /// Number of states of the automaton this was unrolled from.
    pub fn original_state_count(&self) -> usize {
        self.original_states
    }

    /// Total number of layer-states.
    pub fn size(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn state_name(&self, q: LayerState) -> &str {
        &self.names[self.state(q).original]
    }

    /// Dense index of original state `original` in `layer`, if reachable there.
    pub fn find(&self, layer: usize, original: usize) -> Option<LayerState> {
        self.layers[layer]
            .binary_search_by_key(&original, |s| s.original)
            .ok()
            .map(|i| LayerState::new(layer, i))
    }

    pub fn states(&self) -> impl Iterator<Item = LayerState> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, states)| (0..states.len()).map(move |i| LayerState::new(l, i)))
    }

    /// Layers as JSON for debugging.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct DumpState<'a> {
            name: &'a str,
            pred0: Vec<&'a str>,
            pred1: Vec<&'a str>,
        }
        let layers: Vec<Vec<DumpState>> = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, states)| {
                states
                    .iter()
                    .map(|s| {
                        let names = |b: Symbol| {
                            s.preds_by(b)
                                .iter()
                                .map(|&p| self.names[self.layers[l - 1][p as usize].original].as_str())
                                .collect()
                        };
                        DumpState {
                            name: &self.names[s.original],
                            pred0: if l == 0 { vec![] } else { names(Symbol::Zero) },
                            pred1: if l == 0 { vec![] } else { names(Symbol::One) },
                        }
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({
            "n": self.n,
            "final": self.final_state().map(|q| self.state_name(q).to_string()),
            "layers": layers,
        })
    }
}

/// Builds the `n + 1`-layer unrolling, visiting each transition once per
/// layer. Dead-end layer-states (that cannot reach the final state) are kept.
pub fn unroll(nfa: &NormalizedNfa, n: usize) -> UnrolledNfa {
    let a = nfa.nfa();
    let m = a.state_count();
    // Incoming transitions per target, sorted by source so that predecessor
    // lists come out in declaration order.
    let mut incoming: Vec<Vec<(usize, Symbol)>> = vec![Vec::new(); m];
    for t in a.transitions() {
        incoming[t.target].push((t.source, t.symbol));
    }
    for list in &mut incoming {
        list.sort_unstable();
    }

    let mut layers = Vec::with_capacity(n + 1);
    layers.push(vec![UnrolledState {
        original: nfa.initial(),
        preds: Vec::new(),
        pred_by_symbol: [Vec::new(), Vec::new()],
        pred_pos_by_symbol: [Vec::new(), Vec::new()],
    }]);
    // dense index of each original state in the previous layer
    let mut prev_index: Vec<Option<u32>> = vec![None; m];
    prev_index[nfa.initial()] = Some(0);

    for _ in 1..=n {
        let mut layer = Vec::new();
        let mut next_index = vec![None; m];
        for (target, inc) in incoming.iter().enumerate() {
            let mut state = UnrolledState {
                original: target,
                preds: Vec::new(),
                pred_by_symbol: [Vec::new(), Vec::new()],
                pred_pos_by_symbol: [Vec::new(), Vec::new()],
            };
            for &(source, b) in inc {
                if let Some(p) = prev_index[source] {
                    state.pred_by_symbol[b.index()].push(p);
                    if state.preds.last() != Some(&p) {
                        state.preds.push(p);
                    }
                    state.pred_pos_by_symbol[b.index()].push(state.preds.len() as u32 - 1);
                }
            }
            if !state.preds.is_empty() {
                next_index[target] = Some(layer.len() as u32);
                layer.push(state);
            }
        }
        layers.push(layer);
        prev_index = next_index;
    }
    let final_index = prev_index[nfa.final_state()].map(|i| i as usize);
    UnrolledNfa {
        n,
        layers,
        final_index,
        original_states: m,
        names: a.states().to_vec(),
    }
}

/// Whether some word of length `n` is accepted.
pub fn slice_nonempty(u: &UnrolledNfa) -> bool {
    u.final_state().is_some()
}
