//! Binary NFAs: the JSON interchange format, validation, and normalization to
//! the single-initial / single-final form expected by the counting algorithms.
//!
//! The order in which states are declared is significant: it is the total
//! order used to rank predecessors, and therefore it fixes every derivation
//! run and every sampling decision made downstream.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A letter of the binary alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Zero,
    One,
}

impl Symbol {
    pub const ALL: [Symbol; 2] = [Symbol::Zero, Symbol::One];

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Symbol::One
        } else {
            Symbol::Zero
        }
    }

    pub fn index(self) -> usize {
        match self {
            Symbol::Zero => 0,
            Symbol::One => 1,
        }
    }

    pub fn as_bit(self) -> bool {
        self == Symbol::One
    }
}

impl TryFrom<u64> for Symbol {
    type Error = AutomatonError;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Symbol::Zero),
            1 => Ok(Symbol::One),
            other => Err(AutomatonError::InvalidSymbol(other)),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error("malformed automaton: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("undeclared state `{0}`")]
    UndeclaredState(String),
    #[error("state `{0}` declared more than once")]
    DuplicateState(String),
    #[error("automaton has no states")]
    NoStates,
    #[error("automaton has no initial state")]
    EmptyInitials,
    #[error("automaton has no final state")]
    EmptyFinals,
    #[error("duplicate transition ({0}, {1}, {2})")]
    DuplicateTransition(String, Symbol, String),
    #[error("invalid symbol {0}, expected 0 or 1")]
    InvalidSymbol(u64),
}

impl AutomatonError {
    /// Stable identifier used in machine-readable error output.
    pub fn code(&self) -> &'static str {
        match self {
            AutomatonError::Syntax(_) => "malformed_automaton",
            AutomatonError::UndeclaredState(_) => "undeclared_state",
            AutomatonError::DuplicateState(_) => "duplicate_state",
            AutomatonError::NoStates => "no_states",
            AutomatonError::EmptyInitials => "empty_initials",
            AutomatonError::EmptyFinals => "empty_finals",
            AutomatonError::DuplicateTransition(..) => "duplicate_transition",
            AutomatonError::InvalidSymbol(_) => "invalid_symbol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub source: usize,
    pub symbol: Symbol,
    pub target: usize,
}

/// A validated NFA over `{0, 1}`. State ids are positions in `states`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nfa {
    states: Vec<String>,
    initials: Vec<usize>,
    finals: Vec<usize>,
    transitions: Vec<Transition>,
}

#[derive(Serialize, Deserialize)]
struct NfaFile {
    states: Vec<String>,
    initial: Vec<String>,
    #[serde(rename = "final")]
    finals: Vec<String>,
    transitions: Vec<(String, u64, String)>,
}

impl Nfa {
    /// Builds an NFA from raw parts. Initial and final lists are treated as
    /// sets; transitions must be unique.
    pub fn new(
        states: Vec<String>,
        initials: impl IntoIterator<Item = usize>,
        finals: impl IntoIterator<Item = usize>,
        transitions: Vec<Transition>,
    ) -> Result<Self, AutomatonError> {
        if states.is_empty() {
            return Err(AutomatonError::NoStates);
        }
        let mut seen = HashSet::with_capacity(states.len());
        for name in &states {
            if !seen.insert(name.as_str()) {
                return Err(AutomatonError::DuplicateState(name.clone()));
            }
        }
        let m = states.len();
        let check = |id: usize| {
            if id < m {
                Ok(id)
            } else {
                Err(AutomatonError::UndeclaredState(format!("#{id}")))
            }
        };
        let initials = initials
            .into_iter()
            .map(check)
            .collect::<Result<BTreeSet<_>, _>>()?;
        let finals = finals
            .into_iter()
            .map(check)
            .collect::<Result<BTreeSet<_>, _>>()?;
        if initials.is_empty() {
            return Err(AutomatonError::EmptyInitials);
        }
        if finals.is_empty() {
            return Err(AutomatonError::EmptyFinals);
        }
        let mut unique = HashSet::with_capacity(transitions.len());
        for t in &transitions {
            check(t.source)?;
            check(t.target)?;
            if !unique.insert(*t) {
                return Err(AutomatonError::DuplicateTransition(
                    states[t.source].clone(),
                    t.symbol,
                    states[t.target].clone(),
                ));
            }
        }
        Ok(Nfa {
            states,
            initials: initials.into_iter().collect(),
            finals: finals.into_iter().collect(),
            transitions,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn initials(&self) -> &[usize] {
        &self.initials
    }

    pub fn finals(&self) -> &[usize] {
        &self.finals
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn is_normalized(&self) -> bool {
        self.initials.len() == 1 && self.finals.len() == 1
    }

    /// Whether `word` reaches some final state from some initial state, by
    /// plain state-set simulation on this automaton.
    pub fn accepts(&self, word: impl IntoIterator<Item = Symbol>) -> bool {
        let reached = self.simulate(word);
        self.finals.iter().any(|&f| reached[f])
    }

    /// The set of states reachable from the initial states by `word`.
    pub fn simulate(&self, word: impl IntoIterator<Item = Symbol>) -> Vec<bool> {
        let mut current = vec![false; self.states.len()];
        for &i in &self.initials {
            current[i] = true;
        }
        for b in word {
            let mut next = vec![false; self.states.len()];
            for t in &self.transitions {
                if t.symbol == b && current[t.source] {
                    next[t.target] = true;
                }
            }
            current = next;
        }
        current
    }

    pub fn to_json(&self) -> String {
        let file = NfaFile {
            states: self.states.clone(),
            initial: self.initials.iter().map(|&i| self.states[i].clone()).collect(),
            finals: self.finals.iter().map(|&i| self.states[i].clone()).collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| {
                    (
                        self.states[t.source].clone(),
                        t.symbol.index() as u64,
                        self.states[t.target].clone(),
                    )
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("automaton serialization cannot fail")
    }
}

/// Parses the JSON automaton format
/// `{"states": [...], "initial": [...], "final": [...], "transitions": [[src, b, dst], ...]}`.
pub fn parse_nfa(text: &str) -> Result<Nfa, AutomatonError> {
    let file: NfaFile = serde_json::from_str(text)?;
    let mut index = HashMap::with_capacity(file.states.len());
    for (i, name) in file.states.iter().enumerate() {
        if index.insert(name.as_str(), i).is_some() {
            return Err(AutomatonError::DuplicateState(name.clone()));
        }
    }
    let lookup = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| AutomatonError::UndeclaredState(name.to_string()))
    };
    let initials = file
        .initial
        .iter()
        .map(|s| lookup(s))
        .collect::<Result<Vec<_>, _>>()?;
    let finals = file
        .finals
        .iter()
        .map(|s| lookup(s))
        .collect::<Result<Vec<_>, _>>()?;
    let transitions = file
        .transitions
        .iter()
        .map(|(src, b, dst)| {
            Ok(Transition {
                source: lookup(src)?,
                symbol: Symbol::try_from(*b)?,
                target: lookup(dst)?,
            })
        })
        .collect::<Result<Vec<_>, AutomatonError>>()?;
    let states = file.states;
    Nfa::new(states, initials, finals, transitions)
}

/// An NFA with exactly one initial and one final state.
///
/// `accepts_empty` records whether the source automaton accepted the empty
/// word, which the single-initial/single-final form cannot express when the
/// two differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedNfa {
    nfa: Nfa,
    accepts_empty: bool,
}

impl NormalizedNfa {
    pub fn nfa(&self) -> &Nfa {
        &self.nfa
    }

    pub fn initial(&self) -> usize {
        self.nfa.initials[0]
    }

    pub fn final_state(&self) -> usize {
        self.nfa.finals[0]
    }

    pub fn accepts_empty(&self) -> bool {
        self.accepts_empty
    }

    pub fn state_count(&self) -> usize {
        self.nfa.state_count()
    }
}

fn fresh_name(states: &[String], base: &str) -> String {
    let taken: HashSet<&str> = states.iter().map(String::as_str).collect();
    let mut name = base.to_string();
    let mut k = 1;
    while taken.contains(name.as_str()) {
        name = format!("{base}_{k}");
        k += 1;
    }
    name
}

/// Reduces `nfa` to a single initial and a single final state, preserving
/// the number of accepted words of every length `n >= 1`.
///
/// Several initials are merged into a fresh state copying all of their
/// outgoing transitions; several finals into a fresh state receiving a copy
/// of every transition entering one of them. Fresh states come last in the
/// state order. An already normalized automaton is returned unchanged.
pub fn normalize(nfa: &Nfa) -> NormalizedNfa {
    let accepts_empty = nfa.initials.iter().any(|i| nfa.finals.contains(i));
    if nfa.is_normalized() {
        return NormalizedNfa {
            nfa: nfa.clone(),
            accepts_empty,
        };
    }

    let mut states = nfa.states.clone();
    let mut transitions = nfa.transitions.clone();
    let mut seen: HashSet<Transition> = transitions.iter().copied().collect();
    let mut push = |t: Transition, transitions: &mut Vec<Transition>| {
        if seen.insert(t) {
            transitions.push(t);
        }
    };

    let initial = if nfa.initials.len() > 1 {
        let fresh = states.len();
        states.push(fresh_name(&states, "__initial"));
        for t in nfa.transitions.clone() {
            if nfa.initials.contains(&t.source) {
                push(
                    Transition {
                        source: fresh,
                        ..t
                    },
                    &mut transitions,
                );
            }
        }
        fresh
    } else {
        nfa.initials[0]
    };

    let final_state = if nfa.finals.len() > 1 {
        let fresh = states.len();
        states.push(fresh_name(&states, "__final"));
        // Includes the copies made for a fresh initial state.
        for t in transitions.clone() {
            if nfa.finals.contains(&t.target) {
                push(
                    Transition {
                        target: fresh,
                        ..t
                    },
                    &mut transitions,
                );
            }
        }
        fresh
    } else {
        nfa.finals[0]
    };

    NormalizedNfa {
        nfa: Nfa {
            states,
            initials: vec![initial],
            finals: vec![final_state],
            transitions,
        },
        accepts_empty,
    }
}
