mod common;

use nfacount::automaton::Symbol;
use nfacount::exact::{
    count_exact_dp, count_exact_enum, derivation_run, divergence_class, language, lcps, membership,
    state_language_sizes, Word,
};
use nfacount::unrolling::LayerState;
use num_bigint::BigUint;

use common::{at, brute_count, figure, instance, unrolled, w, TOTAL};

fn names(u: &nfacount::unrolling::UnrolledNfa, run: &[LayerState]) -> Vec<String> {
    run.iter().map(|&q| u.state_name(q).to_string()).collect()
}

#[test]
fn figure_membership() {
    let u = figure();
    assert!(membership(&u, &w("010"), at(&u, 3, "q10")));
    assert!(!membership(&u, &w("111"), at(&u, 3, "q11")));
    assert!(membership(&u, &w("1011"), u.final_state().unwrap()));
    assert!(membership(&u, &w("1010"), u.final_state().unwrap()));
}

#[test]
fn figure_counts_agree() {
    let u = figure();
    let nfa = nfacount::automaton::parse_nfa(common::FIGURE).unwrap();
    let brute = BigUint::from(brute_count(&nfa, 4));
    assert_eq!(count_exact_enum(&u).unwrap(), brute);
    assert_eq!(count_exact_dp(&u).unwrap(), brute);
}

#[test]
fn figure_derivation_run_of_010() {
    let u = figure();
    let run = derivation_run(&u, &w("010"), at(&u, 3, "q10")).unwrap();
    // the run reaching q10 through q6 enters layer one by the dashed edge to q3
    assert_eq!(names(&u, run.states()), ["qI", "q3", "q6", "q10"]);
}

#[test]
fn no_run_of_010_starts_with_the_one_edge_to_q1() {
    // (qI, q1, q6, q10) cannot carry 010: q1 is only reachable on symbol 1
    let u = figure();
    let q1 = at(&u, 1, "q1");
    assert!(!membership(&u, &w("0"), q1));
    assert!(membership(&u, &w("1"), q1));
}

#[test]
fn figure_lcps_of_highlighted_runs() {
    let u = figure();
    let f = u.final_state().unwrap();
    let red = derivation_run(&u, &w("1101"), f).unwrap();
    let blue = derivation_run(&u, &w("1110"), f).unwrap();
    assert_eq!(names(&u, red.states()), ["qI", "q1", "q5", "q9", "qF"]);
    assert_eq!(names(&u, blue.states()), ["qI", "q1", "q5", "q10", "qF"]);
    assert_eq!(lcps(&red, &blue), at(&u, 2, "q5"));
}

#[test]
fn figure_derivation_run_of_1111_leaves_through_q2() {
    let u = figure();
    let f = u.final_state().unwrap();
    let run = derivation_run(&u, &w("1111"), f).unwrap();
    assert_eq!(names(&u, run.states()), ["qI", "q2", "q7", "q9", "qF"]);
    let red = derivation_run(&u, &w("1101"), f).unwrap();
    assert_eq!(lcps(&red, &run), u.initial());
}

#[test]
fn divergence_classes_partition_the_language() {
    for seed in 0..10 {
        let u = unrolled(&instance(4, 5, seed), 5);
        for q in u.states().filter(|q| q.layer > 0) {
            let mut lang = language(&u, q).unwrap();
            lang.sort();
            for word in lang.iter().take(4) {
                let mut all: Vec<Word> = (0..=q.layer)
                    .flat_map(|l| divergence_class(&u, word, q, l).unwrap())
                    .collect();
                all.sort();
                assert_eq!(all, lang);
                assert_eq!(divergence_class(&u, word, q, q.layer).unwrap(), vec![word.clone()]);
            }
        }
    }
}

#[test]
fn derivation_runs_are_accepting_and_recursive() {
    for seed in 0..15 {
        let u = unrolled(&instance(5, 6, seed), 6);
        for q in u.states().filter(|q| q.layer > 0) {
            for word in language(&u, q).unwrap() {
                let run = derivation_run(&u, &word, q).unwrap();
                let states = run.states();
                assert_eq!(states[0], u.initial());
                assert_eq!(run.last(), q);
                for (i, &s) in states.iter().enumerate() {
                    assert!(membership(&u, &word.prefix(i), s));
                }
                // the last step picks the first accepting predecessor on the last symbol
                let b = word.get(q.layer - 1);
                let head = word.prefix(q.layer - 1);
                let first = u
                    .state(q)
                    .preds_by(b)
                    .iter()
                    .map(|&p| LayerState::new(q.layer - 1, p as usize))
                    .find(|&p| membership(&u, &head, p))
                    .unwrap();
                assert_eq!(states[q.layer - 1], first);
                let prefix_run = derivation_run(&u, &head, first).unwrap();
                assert_eq!(prefix_run.states(), &states[..q.layer]);
            }
        }
    }
}

#[test]
fn state_sizes_match_languages() {
    for seed in 0..10 {
        let u = unrolled(&instance(5, 6, seed), 6);
        let sizes = state_language_sizes(&u).unwrap();
        for q in u.states() {
            assert_eq!(sizes[q.layer][q.index], BigUint::from(language(&u, q).unwrap().len()));
        }
    }
}

#[test]
fn total_automaton() {
    let nfa = nfacount::automaton::parse_nfa(TOTAL).unwrap();
    for n in 1..=12 {
        let u = unrolled(&nfa, n);
        assert_eq!(count_exact_dp(&u).unwrap(), BigUint::from(1u64 << n));
        assert_eq!(count_exact_enum(&u).unwrap(), BigUint::from(1u64 << n));
    }
}

#[test]
fn errors() {
    let u = figure();
    let f = u.final_state().unwrap();
    assert_eq!(derivation_run(&u, &w("11"), f).unwrap_err().code(), "length_mismatch");
    assert_eq!(derivation_run(&u, &w("0000"), f).unwrap_err().code(), "not_accepted");
    assert!(divergence_class(&u, &w("1101"), f, 5).is_err());
    let _ = Symbol::ALL;
}
