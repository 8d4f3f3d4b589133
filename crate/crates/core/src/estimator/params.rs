use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::EstimatorError;

/// Parameters of the counting algorithm for one `(ε, δ, n, |Q|)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorParams {
    pub epsilon: BigRational,
    pub delta: BigRational,
    pub kappa: BigRational,
    pub n_s: u64,
    pub n_t: u64,
    pub n_u: u64,
    /// Exact value of `16 n_s n_t n (1 + κ) |Q|`.
    pub theta: BigRational,
    pub n: usize,
    pub states: usize,
}

impl EstimatorParams {
    /// Replicas per state, `n_s · n_t`.
    pub fn replicas(&self) -> usize {
        (self.n_s * self.n_t) as usize
    }

    /// Smallest integer sample total that triggers the interrupt.
    pub fn theta_ceil(&self) -> u64 {
        ceil_rational(&self.theta).to_u64().unwrap_or(u64::MAX)
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Out {
            epsilon: String,
            delta: String,
            kappa: String,
            n_s: u64,
            n_t: u64,
            n_u: u64,
            theta: String,
            n: usize,
            states: usize,
        }
        serde_json::to_value(Out {
            epsilon: self.epsilon.to_string(),
            delta: self.delta.to_string(),
            kappa: self.kappa.to_string(),
            n_s: self.n_s,
            n_t: self.n_t,
            n_u: self.n_u,
            theta: self.theta.to_string(),
            n: self.n,
            states: self.states,
        })
        .expect("plain struct serializes")
    }
}

fn ceil_rational(x: &BigRational) -> BigInt {
    x.numer().div_ceil(x.denom())
}

fn rational(v: u64) -> BigRational {
    BigRational::from_integer(v.into())
}

/// Bounds `lo ≤ e < hi` from the first `terms` terms of `Σ 1/i!`.
fn e_bounds(terms: u32) -> (BigRational, BigRational) {
    let mut sum = BigRational::zero();
    let mut fact = BigUint::one();
    for i in 0..terms {
        if i > 0 {
            fact *= i;
        }
        sum += BigRational::new(1.into(), BigInt::from(fact.clone()));
    }
    // the tail Σ_{i ≥ terms} 1/i! is below 1 / ((terms − 1)! (terms − 1))
    let tail = BigRational::new(1.into(), BigInt::from(fact * (terms - 1)));
    let hi = &sum + tail;
    (sum, hi)
}

/// Whether `e^k ≥ y`, decided with rational bounds on `e`.
fn exp_at_least(k: u64, y: &BigRational) -> bool {
    if k == 0 {
        return *y <= BigRational::one();
    }
    let mut terms = 30;
    loop {
        let (lo, hi) = e_bounds(terms);
        let exp = k as i32;
        if num_traits::pow(lo, exp as usize) >= *y {
            return true;
        }
        if num_traits::pow(hi, exp as usize) < *y {
            return false;
        }
        // e^k is irrational for k > 0, so tighter bounds always decide
        terms *= 2;
    }
}

/// `⌈8 ln x⌉` for rational `x ≥ 1`, exactly: the least `k` with `e^k ≥ x^8`.
pub fn ceil_eight_ln(x: &BigRational) -> u64 {
    assert!(*x >= BigRational::one(), "argument below one");
    let y = num_traits::pow(x.clone(), 8);
    let guess = (8.0 * x.to_f64().expect("finite").ln()).ceil().max(0.0) as u64;
    let mut k = guess;
    while !exp_at_least(k, &y) {
        k += 1;
    }
    while k > 0 && exp_at_least(k - 1, &y) {
        k -= 1;
    }
    k
}

/// The four parameter formulas of the outer loop, evaluated exactly.
/// `states` is the state count of the (normalized) automaton.
pub fn compute_params(
    epsilon: &BigRational,
    delta: &BigRational,
    n: usize,
    states: usize,
) -> Result<EstimatorParams, EstimatorError> {
    if !epsilon.is_positive() {
        return Err(EstimatorError::InvalidEpsilon(epsilon.to_string()));
    }
    if !delta.is_positive() || *delta > BigRational::one() {
        return Err(EstimatorError::InvalidDelta(delta.to_string()));
    }
    assert!(n >= 1 && states >= 1, "parameters need n ≥ 1 and at least one state");
    let one = BigRational::one();
    let kappa = epsilon / (&one + epsilon);
    let two_eps = epsilon * rational(2);
    let ns = rational(4 * (n as u64 + 1)) * num_traits::pow(&one + two_eps, 2) * (&one + epsilon)
        / num_traits::pow(epsilon.clone(), 2);
    let n_s = ceil_rational(&ns).to_u64().ok_or(EstimatorError::ParameterOverflow("n_s"))?;
    let n_t = ceil_eight_ln(&rational(16 * n as u64 * states as u64));
    // δ = 1 makes the closed form zero; at least one core must run
    let n_u = ceil_eight_ln(&delta.recip()).max(1);
    let theta = rational(16 * n_s * n_t * n as u64 * states as u64) * (&one + &kappa);
    Ok(EstimatorParams {
        epsilon: epsilon.clone(),
        delta: delta.clone(),
        kappa,
        n_s,
        n_t,
        n_u,
        theta,
        n,
        states,
    })
}
