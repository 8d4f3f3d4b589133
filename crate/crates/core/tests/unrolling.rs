mod common;

use nfacount::automaton::{normalize, Symbol};
use nfacount::exact::{membership, Word};
use nfacount::unrolling::{slice_nonempty, unroll, LayerState};

use common::{brute_count, figure, instance, unrolled};

#[test]
fn figure_layers() {
    let u = figure();
    let sizes: Vec<usize> = (0..u.layer_count()).map(|l| u.layer_len(l)).collect();
    assert_eq!(sizes, [1, 4, 4, 3, 1]);
    let names: Vec<&str> = (0..4).map(|i| u.state_name(LayerState::new(1, i))).collect();
    assert_eq!(names, ["q1", "q2", "q3", "q4"]);
    assert_eq!(u.state_name(u.final_state().unwrap()), "qF");
}

#[test]
fn predecessor_lists_are_sorted_and_consistent() {
    for seed in 0..30 {
        let u = unrolled(&instance(5, 6, seed), 6);
        for q in u.states().filter(|q| q.layer > 0) {
            let s = u.state(q);
            assert!(s.preds().windows(2).all(|p| p[0] < p[1]));
            for b in Symbol::ALL {
                let by = s.preds_by(b);
                assert!(by.windows(2).all(|p| p[0] < p[1]));
                let via_positions: Vec<u32> = s.pred_positions_by(b).iter().map(|&i| s.preds()[i as usize]).collect();
                assert_eq!(via_positions, by);
            }
        }
    }
}

#[test]
fn layer_membership_matches_simulation() {
    for seed in 0..20 {
        let nfa = instance(4, 5, seed);
        let u = unrolled(&nfa, 5);
        for len in 0..=5 {
            for word in Word::all(len) {
                let reached = normalize(&nfa).nfa().simulate(word.symbols());
                for (i, s) in u.layer(len).iter().enumerate() {
                    assert_eq!(membership(&u, &word, LayerState::new(len, i)), reached[s.original()]);
                }
                // states reached but absent from the layer cannot exist
                let present: Vec<usize> = u.layer(len).iter().map(|s| s.original()).collect();
                for (orig, &hit) in reached.iter().enumerate() {
                    assert!(!hit || present.contains(&orig));
                }
            }
        }
    }
}

#[test]
fn slice_nonempty_matches_brute_force() {
    for seed in 0..50 {
        let nfa = nfacount::harness::random_nfa(4, 0.2, 500 + seed, None).unwrap();
        for n in 1..=6 {
            assert_eq!(slice_nonempty(&unroll(&normalize(&nfa), n)), brute_count(&nfa, n) > 0);
        }
    }
}

#[test]
fn size_is_bounded() {
    let nfa = instance(6, 8, 3);
    let u = unrolled(&nfa, 8);
    assert!(u.size() <= 9 * 6);
    assert_eq!(u.original_state_count(), 6);
}
