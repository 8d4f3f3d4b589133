//! Exact probabilities, keyed random streams and exact Bernoulli draws.
//!
//! A draw with probability `a/b` consumes a uniform integer in `[0, b)`
//! obtained by rejection sampling, generated most significant limb first and
//! stopped as soon as the outcome is decided. The probability of `true` is
//! therefore exactly `a/b`.

mod stream;

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use stream::{philox4x64_10, trial_key, Phase, RandomStream, StreamKey};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProbError {
    #[error("value {0} is not a probability")]
    NotAProbability(String),
    #[error("median of an empty list")]
    EmptyMedian,
}

/// A non-negative exact rational, or the distinguished value `INF`.
///
/// Division follows the convention `b/0 = INF` for `b ≠ 0` and `0/0 = 0`.
/// Values above one do occur (an inverted mean can exceed one); only values
/// in `[0, 1]` can drive a Bernoulli draw.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Prob {
    Finite(BigRational),
    Inf,
}

impl Prob {
    pub fn zero() -> Self {
        Prob::Finite(BigRational::zero())
    }

    pub fn one() -> Self {
        Prob::Finite(BigRational::one())
    }

    pub fn new(numerator: u64, denominator: u64) -> Self {
        Prob::from(BigRational::new(numerator.into(), denominator.into()))
    }

    pub fn from_integer(v: u64) -> Self {
        Prob::Finite(BigRational::from_integer(v.into()))
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, Prob::Inf)
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Prob::Finite(r) => Some(r),
            Prob::Inf => None,
        }
    }

    pub fn numerator(&self) -> Option<BigUint> {
        self.as_rational().and_then(|r| r.numer().to_biguint())
    }

    pub fn denominator(&self) -> Option<BigUint> {
        self.as_rational().and_then(|r| r.denom().to_biguint())
    }

    pub fn is_probability(&self) -> bool {
        match self {
            Prob::Finite(r) => !r.is_negative() && *r <= BigRational::one(),
            Prob::Inf => false,
        }
    }

    pub fn mul(&self, other: &Prob) -> Prob {
        match (self, other) {
            (Prob::Finite(a), Prob::Finite(b)) => Prob::Finite(a * b),
            (Prob::Finite(a), Prob::Inf) | (Prob::Inf, Prob::Finite(a)) if a.is_zero() => Prob::zero(),
            _ => Prob::Inf,
        }
    }

    pub fn div(&self, other: &Prob) -> Prob {
        match (self, other) {
            (Prob::Finite(a), Prob::Finite(b)) if b.is_zero() => {
                if a.is_zero() {
                    Prob::zero()
                } else {
                    Prob::Inf
                }
            }
            (Prob::Finite(a), Prob::Finite(b)) => Prob::Finite(a / b),
            (Prob::Finite(_), Prob::Inf) => Prob::zero(),
            (Prob::Inf, Prob::Finite(_)) => Prob::Inf,
            // INF/INF does not arise in the estimator; treat it as 1.
            (Prob::Inf, Prob::Inf) => Prob::one(),
        }
    }

    pub fn invert(&self) -> Prob {
        Prob::one().div(self)
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Finite(r) => r.to_f64().unwrap_or(f64::INFINITY),
            Prob::Inf => f64::INFINITY,
        }
    }

    /// A reusable sampler for draws with this probability.
    pub fn sampler(&self) -> Result<Bernoulli, ProbError> {
        if !self.is_probability() {
            return Err(ProbError::NotAProbability(self.to_string()));
        }
        let r = self.as_rational().expect("finite");
        Ok(Bernoulli::exact(
            &r.numer().to_biguint().expect("non-negative"),
            &r.denom().to_biguint().expect("positive"),
        ))
    }
}

impl From<BigRational> for Prob {
    fn from(r: BigRational) -> Self {
        assert!(!r.is_negative(), "negative probability");
        Prob::Finite(r)
    }
}

impl PartialOrd for Prob {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Prob {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Prob::Finite(a), Prob::Finite(b)) => a.cmp(b),
            (Prob::Finite(_), Prob::Inf) => Ordering::Less,
            (Prob::Inf, Prob::Finite(_)) => Ordering::Greater,
            (Prob::Inf, Prob::Inf) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prob::Finite(r) => write!(f, "{r}"),
            Prob::Inf => write!(f, "inf"),
        }
    }
}

impl fmt::Debug for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Prob({self})")
    }
}

/// A prepared Bernoulli trial.
#[derive(Debug, Clone)]
pub enum Bernoulli {
    Never,
    Always,
    /// Denominator below `2^32`.
    Word { numer: u64, denom: u64 },
    /// Wider denominator `D = denom_top · 2^shift + denom_low` with a 32-bit
    /// `denom_top` (top bit set); `numer` is split at the same shift.
    Wide {
        numer_top: u64,
        denom_top: u64,
        shift: u64,
        numer_low: BigUint,
        denom_low: BigUint,
    },
    /// Non-certified floating point draw.
    Float(f64),
}

const TOP_BITS: u64 = 32;

/// Uniform integer in `[0, range)` for `1 ≤ range ≤ 2^32`, by
/// multiply-and-reject: the high half of `x · range` is uniform once low
/// halves below `2^32 mod range` are rejected.
fn uniform_below(range: u64, next: &mut impl FnMut() -> u32) -> u64 {
    debug_assert!(range >= 1 && range <= 1 << 32);
    let mut m = next() as u64 * range;
    if (m as u32 as u64) < range {
        let threshold = (1u64 << 32) % range;
        while (m as u32 as u64) < threshold {
            m = next() as u64 * range;
        }
    }
    m >> 32
}

/// Uniform integer with `bits` random bits.
fn uniform_bits(bits: u64, next: &mut impl FnMut() -> u32) -> BigUint {
    let mut out = BigUint::zero();
    let mut left = bits;
    while left > 0 {
        let take = left.min(32);
        let chunk = if take == 32 {
            next()
        } else {
            next() & ((1u32 << take) - 1)
        };
        out = (out << take) | BigUint::from(chunk);
        left -= take;
    }
    out
}

impl Bernoulli {
    pub fn exact(numer: &BigUint, denom: &BigUint) -> Self {
        assert!(!denom.is_zero() && numer <= denom);
        if numer.is_zero() {
            return Bernoulli::Never;
        }
        if numer == denom {
            return Bernoulli::Always;
        }
        // A 32-bit range keeps multiply-and-reject rejections below 2^-32.
        if denom.bits() <= TOP_BITS {
            return Bernoulli::Word {
                numer: numer.to_u64().expect("below the denominator"),
                denom: denom.to_u64().expect("32 bits"),
            };
        }
        let shift = denom.bits() - TOP_BITS;
        let low_mask = (BigUint::one() << shift) - 1u32;
        Bernoulli::Wide {
            numer_top: (numer >> shift).to_u64().expect("32 bits"),
            denom_top: (denom >> shift).to_u64().expect("32 bits"),
            shift,
            numer_low: numer & &low_mask,
            denom_low: denom & &low_mask,
        }
    }

    pub fn float(p: f64) -> Self {
        if p <= 0.0 {
            Bernoulli::Never
        } else if p >= 1.0 {
            Bernoulli::Always
        } else {
            Bernoulli::Float(p)
        }
    }

    /// Whether the outcome is fixed and no randomness is consumed.
    pub fn is_trivial(&self) -> bool {
        matches!(self, Bernoulli::Never | Bernoulli::Always)
    }

    pub fn sample(&self, stream: &mut RandomStream) -> bool {
        match self {
            Bernoulli::Float(p) => stream.next_f64() < *p,
            _ => self.sample_words(&mut || stream.next_u32()),
        }
    }

    /// Exact draw from a source of uniform 32-bit words.
    fn sample_words(&self, next: &mut impl FnMut() -> u32) -> bool {
        match self {
            Bernoulli::Never => false,
            Bernoulli::Always => true,
            Bernoulli::Word { numer, denom } => uniform_below(*denom, next) < *numer,
            Bernoulli::Wide {
                numer_top,
                denom_top,
                shift,
                numer_low,
                denom_low,
            } => loop {
                // U = top · 2^shift + low with top uniform on [0, denom_top]
                // and low uniform on [0, 2^shift), rejected when U ≥ D. The
                // low bits are drawn only when the top words tie.
                let top = uniform_below(denom_top + 1, next);
                if top < *denom_top {
                    match top.cmp(numer_top) {
                        Ordering::Less => return true,
                        Ordering::Greater => return false,
                        Ordering::Equal => return uniform_bits(*shift, next) < *numer_low,
                    }
                }
                let low = uniform_bits(*shift, next);
                if low >= *denom_low {
                    continue;
                }
                return numer_top == denom_top && low < *numer_low;
            },
            Bernoulli::Float(p) => {
                let bits = (next() as u64) << 32 | next() as u64;
                ((bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)) < *p
            }
        }
    }
}

/// One draw that is `true` with probability exactly `p`.
pub fn bernoulli(p: &Prob, stream: &mut RandomStream) -> Result<bool, ProbError> {
    Ok(p.sampler()?.sample(stream))
}

/// Lower median: the element at sorted index `⌊(len − 1) / 2⌋`.
pub fn median<T: PartialOrd + Clone>(values: &[T]) -> Result<T, ProbError> {
    if values.is_empty() {
        return Err(ProbError::EmptyMedian);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(sorted[(sorted.len() - 1) / 2].clone())
}

/// Arithmetic the estimator needs from its probability representation.
/// Implemented exactly by [`Prob`] and, without guarantees, by `f64`.
pub trait Scalar: Clone + PartialOrd + Send + Sync + fmt::Debug + 'static {
    /// Whether results in this representation carry the exactness guarantee.
    const CERTIFIED: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(v: u64) -> Self;
    fn is_zero(&self) -> bool;
    fn mul(&self, other: &Self) -> Self;
    /// `b/0 = INF` for `b ≠ 0`, `0/0 = 0`.
    fn div(&self, other: &Self) -> Self;
    fn sampler(&self) -> Result<Bernoulli, ProbError>;
    /// Exact value, `None` for infinity.
    fn to_rational(&self) -> Option<BigRational>;

    fn min_of(&self, other: &Self) -> Self {
        if other < self {
            other.clone()
        } else {
            self.clone()
        }
    }

    fn invert(&self) -> Self {
        Self::one().div(self)
    }
}

impl Scalar for Prob {
    const CERTIFIED: bool = true;

    fn zero() -> Self {
        Prob::zero()
    }
    fn one() -> Self {
        Prob::one()
    }
    fn from_u64(v: u64) -> Self {
        Prob::from_integer(v)
    }
    fn is_zero(&self) -> bool {
        matches!(self, Prob::Finite(r) if r.is_zero())
    }
    fn mul(&self, other: &Self) -> Self {
        Prob::mul(self, other)
    }
    fn div(&self, other: &Self) -> Self {
        Prob::div(self, other)
    }
    fn sampler(&self) -> Result<Bernoulli, ProbError> {
        Prob::sampler(self)
    }
    fn to_rational(&self) -> Option<BigRational> {
        self.as_rational().cloned()
    }
}

impl Scalar for f64 {
    const CERTIFIED: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_u64(v: u64) -> Self {
        v as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn mul(&self, other: &Self) -> Self {
        if *self == 0.0 || *other == 0.0 {
            0.0
        } else {
            self * other
        }
    }
    fn div(&self, other: &Self) -> Self {
        if *other == 0.0 {
            if *self == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self / other
        }
    }
    fn sampler(&self) -> Result<Bernoulli, ProbError> {
        if !(0.0..=1.0).contains(self) {
            return Err(ProbError::NotAProbability(self.to_string()));
        }
        Ok(Bernoulli::float(*self))
    }
    fn to_rational(&self) -> Option<BigRational> {
        if self.is_finite() {
            BigRational::from_float(*self)
        } else {
            None
        }
    }
}

/// Parses a non-negative decimal (`0.2`, `1e-3`) or fraction (`1/5`)
/// literal into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once('/') {
        let a: BigInt = a.trim().parse().ok()?;
        let b: BigInt = b.trim().parse().ok()?;
        if b.is_zero() {
            return None;
        }
        return Some(BigRational::new(a, b));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let (sign, digits) = match digits.strip_prefix('-') {
        Some(d) => (Sign::Minus, d.to_string()),
        None => (Sign::Plus, digits.trim_start_matches('+').to_string()),
    };
    if digits.is_empty() || !digits.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let value = BigInt::from_biguint(sign, digits.parse::<BigUint>().ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    Some(if scale >= 0 {
        BigRational::from_integer(value * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(value, num_traits::pow(ten, (-scale) as usize))
    })
}
