//! Approximate and exact counting of the length-`n` words accepted by a
//! nondeterministic finite automaton over `{0, 1}`.
//!
//! [`estimator::count_nfa`] is the randomized approximation scheme; the
//! [`exact`] module holds the oracles it is checked against.

pub mod automaton;
pub mod caching;
pub mod cli;
pub mod estimator;
pub mod exact;
pub mod harness;
pub mod probability;
pub mod unrolling;
