mod common;

use std::collections::HashMap;

use nfacount::automaton::parse_nfa;
use nfacount::estimator::{
    compute_params, count_nfa, count_nfa_core, estimate_and_sample, reduce, union_reference, CoreObserver,
    CountConfig, EstimatorParams, Scheme, Shortcut, StateEvent,
};
use nfacount::exact::{derivation_run, language, membership, state_language_sizes, Word};
use nfacount::probability::{parse_rational, Phase, Prob, RandomStream, StreamKey};
use nfacount::unrolling::{LayerState, UnrolledNfa};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{at, figure, instance, single_word, unrolled, w, TOTAL};

fn r(s: &str) -> BigRational {
    parse_rational(s).unwrap()
}

/// Small parameters for invariant checks: the guarantee does not matter here.
fn small_params(u: &UnrolledNfa, n_s: u64, n_t: u64) -> EstimatorParams {
    let mut p = compute_params(&r("1"), &r("0.5"), u.n(), u.original_state_count()).unwrap();
    p.n_s = n_s;
    p.n_t = n_t;
    p.theta = BigRational::from_integer(BigInt::from(u64::MAX / 2));
    p
}

#[derive(Default)]
struct Recorder {
    estimates: HashMap<LayerState, Prob>,
    hats: HashMap<LayerState, Vec<Vec<Word>>>,
    sets: HashMap<LayerState, Vec<Vec<Word>>>,
    totals: Vec<u64>,
}

impl CoreObserver<Prob> for Recorder {
    fn state_done(&mut self, e: &StateEvent<'_, Prob>) {
        let replicas = e.sets.replicas();
        self.estimates.insert(e.state, e.estimate.p.clone());
        self.hats.insert(e.state, (0..replicas).map(|r| e.hat_words(r)).collect());
        self.sets.insert(e.state, (0..replicas).map(|r| e.sample_words(r)).collect());
        self.totals.push(e.running_total);
        assert_eq!(e.estimate.p, std::cmp::min(e.estimate.rho.clone(), e.estimate.rho_hat.clone()));
        assert!(e.estimate.p <= e.estimate.rho && e.estimate.rho <= Prob::one());
        assert_eq!(e.estimate.n, e.estimate.p.invert());
    }
}

fn record(u: &UnrolledNfa, params: &EstimatorParams, scheme: Scheme, seed: u64) -> (Recorder, bool) {
    let mut rec = Recorder::default();
    let out = count_nfa_core::<Prob>(u, params, scheme, seed, 0, Some(&mut rec)).unwrap();
    (rec, out.interrupted)
}

#[test]
fn reduce_extremes_and_mean() {
    let items: Vec<u32> = (0..100).collect();
    let mut s = RandomStream::new(1, &StreamKey::new(0, 0, 0, 0, Phase::Other, 0));
    assert_eq!(reduce(&items, &Prob::one(), &mut s).unwrap(), items);
    assert!(reduce(&items, &Prob::zero(), &mut s).unwrap().is_empty());
    let half = Prob::new(1, 2);
    let total: usize = (0..10_000).map(|_| reduce(&items, &half, &mut s).unwrap().len()).sum();
    let mean = total as f64 / 10_000.0;
    assert!((47.0..=53.0).contains(&mean), "{mean}");
    let kept = reduce(&items, &Prob::new(1, 3), &mut s).unwrap();
    assert!(kept.iter().all(|x| items.contains(x)));
}

#[test]
fn union_single_predecessor() {
    let u = figure();
    let q9 = at(&u, 3, "q9");
    // q9 has 0-predecessor q5 and 1-predecessor q7
    let q5 = language(&u, at(&u, 2, "q5")).unwrap();
    let q7 = language(&u, at(&u, 2, "q7")).unwrap();
    let out = union_reference(&u, q9, &[q5.clone(), q7.clone()]).unwrap();
    let mut expect: Vec<Word> = q5.iter().map(|x| x.extended(nfacount::automaton::Symbol::Zero)).collect();
    expect.extend(q7.iter().map(|x| x.extended(nfacount::automaton::Symbol::One)));
    expect.sort();
    assert_eq!(out, expect);
}

#[test]
fn union_first_predecessor_rule() {
    let u = figure();
    let q10 = at(&u, 3, "q10");
    let preds: Vec<&str> = u.state(q10).preds().iter().map(|&p| u.state_name(LayerState::new(2, p as usize))).collect();
    assert_eq!(preds, ["q5", "q6", "q7", "q8"]);
    // 0-predecessors q6 ≺ q7 both accept 01: only q6's copy survives
    assert!(membership(&u, &w("01"), at(&u, 2, "q6")) && membership(&u, &w("01"), at(&u, 2, "q7")));
    let from_q7 = union_reference(&u, q10, &[vec![], vec![], vec![w("01")], vec![]]).unwrap();
    assert!(from_q7.is_empty());
    let from_q6 = union_reference(&u, q10, &[vec![], vec![w("01")], vec![], vec![]]).unwrap();
    assert_eq!(from_q6, vec![w("010")]);
}

#[test]
fn union_rejects_corrupt_input() {
    let u = figure();
    let q10 = at(&u, 3, "q10");
    let err = union_reference(&u, q10, &[vec![w("00")], vec![], vec![], vec![]]).unwrap_err();
    assert_eq!(err.code(), "corrupt_sample");
    assert!(union_reference(&u, q10, &[vec![]]).is_err());
}

#[test]
fn union_matches_derivation_runs_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20 {
        let u = unrolled(&instance(6, 5, 100 + seed), 5);
        for q in u.states().filter(|q| q.layer > 0) {
            let preds: Vec<LayerState> = u.state(q).preds().iter().map(|&p| LayerState::new(q.layer - 1, p as usize)).collect();
            let sets: Vec<Vec<Word>> = preds
                .iter()
                .map(|&p| {
                    let lang = language(&u, p).unwrap();
                    let k = rng.random_range(0..=lang.len());
                    lang.into_iter().choose_multiple(&mut rng, k)
                })
                .collect();
            let out = union_reference(&u, q, &sets).unwrap();
            let mut expect: Vec<Word> = Vec::new();
            for word in language(&u, q).unwrap() {
                let run = derivation_run(&u, &word, q).unwrap();
                let via = run.states()[q.layer - 1];
                let pos = preds.iter().position(|&p| p == via).unwrap();
                if sets[pos].contains(&word.prefix(q.layer - 1)) {
                    expect.push(word);
                }
            }
            expect.sort();
            assert_eq!(out, expect);
        }
    }
}

#[test]
fn layer_one_step_is_deterministic() {
    let u = figure();
    let q1 = at(&u, 1, "q1");
    let singletons = vec![vec![vec![Word::empty()]; 6]];
    let (est, sets) = estimate_and_sample::<Prob>(&u, q1, &[Prob::one()], &singletons, 3, 2, 5, 0).unwrap();
    assert_eq!(est.p, Prob::one());
    assert!(sets.iter().all(|s| s == &vec![w("1")]));
}

#[test]
fn all_empty_predecessors() {
    let u = figure();
    let q10 = at(&u, 3, "q10");
    let pred_p = [Prob::new(1, 2), Prob::new(1, 3), Prob::new(1, 4), Prob::new(1, 5)];
    let empty = vec![vec![Vec::<Word>::new(); 6]; 4];
    let (est, sets) = estimate_and_sample::<Prob>(&u, q10, &pred_p, &empty, 3, 2, 1, 0).unwrap();
    assert_eq!(est.rho, Prob::new(1, 5));
    assert!(est.rho_hat.is_inf());
    assert_eq!(est.p, Prob::new(1, 5));
    assert!(sets.iter().all(Vec::is_empty));
}

#[test]
fn core_invariants_on_random_instances() {
    for seed in 0..12 {
        let u = unrolled(&instance(5, 6, 200 + seed), 6);
        let params = small_params(&u, 12, 3);
        let sizes = state_language_sizes(&u).unwrap();
        let (rec, interrupted) = record(&u, &params, Scheme::Cache2, seed);
        assert!(!interrupted);
        for (&q, p) in &rec.estimates {
            for (hat, set) in rec.hats[&q].iter().zip(&rec.sets[&q]) {
                assert!(hat.iter().all(|x| membership(&u, x, q)));
                assert!(set.iter().all(|x| hat.contains(x)));
                let mut dedup = hat.clone();
                dedup.dedup();
                assert_eq!(&dedup, hat);
            }
            if q.layer == 1 {
                let exact = Prob::Finite(BigRational::new(1.into(), BigInt::from(sizes[1][q.index].clone())));
                assert_eq!(p, &exact);
            } else {
                for &pred in u.state(q).preds() {
                    assert!(p <= &rec.estimates[&LayerState::new(q.layer - 1, pred as usize)]);
                }
            }
        }
        assert!(rec.totals.windows(2).all(|t| t[0] <= t[1]));
    }
}

#[test]
fn interrupt_fires_at_theta() {
    let u = unrolled(&instance(5, 6, 7), 6);
    let mut params = small_params(&u, 12, 3);
    params.theta = BigRational::from_integer(BigInt::from(400));
    let mut rec = Recorder::default();
    let out = count_nfa_core::<Prob>(&u, &params, Scheme::Reference, 3, 0, Some(&mut rec)).unwrap();
    assert!(out.interrupted);
    assert!(out.estimate.as_rational().unwrap().is_zero());
    assert!(out.samples >= 400);
    let last = *rec.totals.last().unwrap();
    assert_eq!(last, out.samples);
    assert!(rec.totals[..rec.totals.len() - 1].iter().all(|&t| t < 400));
}

#[test]
fn completed_runs_stay_below_theta() {
    let u = unrolled(&instance(4, 6, 9), 6);
    let params = compute_params(&r("2"), &r("0.5"), 6, u.original_state_count()).unwrap();
    let mut rec = Recorder::default();
    let out = count_nfa_core::<Prob>(&u, &params, Scheme::Cache2, 1, 0, Some(&mut rec)).unwrap();
    if !out.interrupted {
        assert!(rec.totals.iter().all(|&t| t < params.theta_ceil()));
        assert!(!out.estimate.as_rational().unwrap().is_zero());
    }
}

#[test]
fn empty_slice_and_empty_word() {
    let nfa = single_word("101");
    let cfg = CountConfig::new(r("1"), r("0.2"), 0);
    let out = count_nfa(&nfa, 4, &cfg).unwrap();
    assert!(out.estimate.is_zero());
    assert_eq!(out.shortcut, Some(Shortcut::EmptySlice));
    assert!(out.cores.is_empty());
    let out = count_nfa(&parse_nfa(TOTAL).unwrap(), 0, &cfg).unwrap();
    assert_eq!(out.estimate, BigRational::one());
    assert_eq!(out.shortcut, Some(Shortcut::EmptyWord));
}

#[test]
fn single_word_counts_one() {
    let nfa = single_word("10110");
    for seed in 0..3 {
        let out = count_nfa(&nfa, 5, &CountConfig::new(r("1"), r("0.5"), seed)).unwrap();
        assert_eq!(out.estimate, BigRational::one());
    }
}

#[test]
fn invalid_tolerances() {
    let nfa = parse_nfa(TOTAL).unwrap();
    let err = count_nfa(&nfa, 3, &CountConfig::new(r("0"), r("0.2"), 0)).unwrap_err();
    assert_eq!(err.code(), "invalid_epsilon");
    let err = count_nfa(&nfa, 3, &CountConfig::new(r("1"), r("2"), 0)).unwrap_err();
    assert_eq!(err.code(), "invalid_delta");
}

#[test]
fn jobs_and_schemes_do_not_change_the_result() {
    let nfa = instance(4, 5, 31);
    let mut cfg = CountConfig::new(r("2"), r("0.5"), 17);
    let base = count_nfa(&nfa, 5, &cfg).unwrap();
    cfg.jobs = 1;
    assert_eq!(count_nfa(&nfa, 5, &cfg).unwrap().cores, base.cores);
    for scheme in Scheme::ALL {
        cfg.scheme = scheme;
        assert_eq!(count_nfa(&nfa, 5, &cfg).unwrap().estimate, base.estimate, "{scheme}");
    }
}

#[test]
fn float_mode_is_not_certified() {
    let nfa = instance(4, 5, 31);
    let mut cfg = CountConfig::new(r("2"), r("0.5"), 17);
    cfg.float_mode = true;
    let out = count_nfa(&nfa, 5, &cfg).unwrap();
    assert!(!out.certified);
    assert!(out.estimate > BigRational::zero());
}
