#![allow(dead_code)]

use nfacount::automaton::{normalize, parse_nfa, Nfa, Symbol};
use nfacount::exact::Word;
use nfacount::harness::random_nfa;
use nfacount::unrolling::{unroll, LayerState, UnrolledNfa};

/// The four-layer automaton drawn in the paper's running example.
/// Solid edges are 1-transitions, dashed edges 0-transitions.
pub const FIGURE: &str = r#"{
  "states": ["qI","q1","q2","q3","q4","q5","q6","q7","q8","q9","q10","q11","qF"],
  "initial": ["qI"],
  "final": ["qF"],
  "transitions": [
    ["qI",1,"q1"], ["qI",1,"q2"], ["qI",0,"q3"], ["qI",0,"q4"],
    ["q1",1,"q5"], ["q1",0,"q6"], ["q2",0,"q5"], ["q2",1,"q7"],
    ["q3",1,"q6"], ["q3",1,"q7"], ["q3",0,"q8"], ["q4",1,"q8"],
    ["q5",0,"q9"], ["q5",1,"q10"], ["q6",0,"q10"], ["q7",0,"q10"],
    ["q7",1,"q9"], ["q8",1,"q10"], ["q8",1,"q11"],
    ["q9",1,"qF"], ["q10",1,"qF"], ["q10",0,"qF"], ["q11",0,"qF"]
  ]
}"#;

pub const TOTAL: &str =
    r#"{"states":["a"],"initial":["a"],"final":["a"],"transitions":[["a",0,"a"],["a",1,"a"]]}"#;

pub fn figure() -> UnrolledNfa {
    unroll(&normalize(&parse_nfa(FIGURE).unwrap()), 4)
}

pub fn unrolled(nfa: &Nfa, n: usize) -> UnrolledNfa {
    unroll(&normalize(nfa), n)
}

/// State `name` of the figure automaton at `layer`.
pub fn at(u: &UnrolledNfa, layer: usize, name: &str) -> LayerState {
    let id = parse_nfa(FIGURE).unwrap().state_id(name).unwrap();
    u.find(layer, id).unwrap_or_else(|| panic!("{name} not in layer {layer}"))
}

pub fn w(s: &str) -> Word {
    s.parse().unwrap()
}

/// An automaton accepting exactly the word `word` (and nothing else).
pub fn single_word(word: &str) -> Nfa {
    let k = word.len();
    let states: Vec<String> = (0..=k).map(|i| format!("s{i}")).collect();
    let transitions: Vec<String> = word
        .chars()
        .enumerate()
        .map(|(i, c)| format!(r#"["s{}",{},"s{}"]"#, i, c, i + 1))
        .collect();
    let json = format!(
        r#"{{"states":{},"initial":["s0"],"final":["s{}"],"transitions":[{}]}}"#,
        serde_json::to_string(&states).unwrap(),
        k,
        transitions.join(",")
    );
    parse_nfa(&json).unwrap()
}

/// Seeded random automaton with a non-empty slice of length `n`.
pub fn instance(m: usize, n: usize, seed: u64) -> Nfa {
    random_nfa(m, 0.35, seed, Some(n)).unwrap()
}

/// Brute-force count: simulate the source automaton on every word.
pub fn brute_count(nfa: &Nfa, n: usize) -> u64 {
    (0..1u64 << n)
        .filter(|&bits| {
            let word = Word::from_bits(bits, n);
            nfa.accepts(word.symbols())
        })
        .count() as u64
}

pub fn symbols(s: &str) -> Vec<Symbol> {
    w(s).symbols().collect()
}
