use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use smallvec::SmallVec;

use crate::automaton::Symbol;

/// A bit-packed word over `{0, 1}`. Symbol `i` lives in bit `i % 64` of
/// limb `i / 64`; bits past `len` are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    len: u32,
    limbs: SmallVec<[u64; 2]>,
}

impl Word {
    /// The empty word.
    pub fn empty() -> Self {
        Word::default()
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Symbol {
        assert!(i < self.len(), "symbol index {i} out of range");
        Symbol::from_bit(self.limbs[i / 64] >> (i % 64) & 1 == 1)
    }

    pub fn push(&mut self, b: Symbol) {
        let i = self.len as usize;
        if i % 64 == 0 {
            self.limbs.push(0);
        }
        if b.as_bit() {
            self.limbs[i / 64] |= 1 << (i % 64);
        }
        self.len += 1;
    }

    /// `self · b`.
    pub fn extended(&self, b: Symbol) -> Word {
        let mut w = self.clone();
        w.push(b);
        w
    }

    /// The first `k` symbols.
    pub fn prefix(&self, k: usize) -> Word {
        assert!(k <= self.len());
        let mut limbs: SmallVec<[u64; 2]> = self.limbs[..k.div_ceil(64)].into();
        if k % 64 != 0 {
            let last = limbs.len() - 1;
            limbs[last] &= (1u64 << (k % 64)) - 1;
        }
        Word {
            len: k as u32,
            limbs,
        }
    }

    pub fn symbols(&self) -> impl ExactSizeIterator<Item = Symbol> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// The length-`len` word whose symbol `i` is bit `i` of `bits`.
    pub fn from_bits(bits: u64, len: usize) -> Word {
        assert!(len <= 64);
        let mut w = Word::empty();
        for i in 0..len {
            w.push(Symbol::from_bit(bits >> i & 1 == 1));
        }
        w
    }

    /// Every word of length `len`, in increasing order of [`Word::from_bits`].
    pub fn all(len: usize) -> impl Iterator<Item = Word> {
        assert!(len < 64);
        (0u64..1 << len).map(move |bits| Word::from_bits(bits, len))
    }
}

impl FromIterator<Symbol> for Word {
    fn from_iter<I: IntoIterator<Item = Symbol>>(iter: I) -> Self {
        let mut w = Word::empty();
        for b in iter {
            w.push(b);
        }
        w
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.symbols().cmp(other.symbols()))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "λ");
        }
        for b in self.symbols() {
            write!(f, "{}", b.index())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid word literal `{0}`")]
pub struct ParseWordError(String);

impl FromStr for Word {
    type Err = ParseWordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "λ" {
            return Ok(Word::empty());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(Symbol::Zero),
                '1' => Ok(Symbol::One),
                _ => Err(ParseWordError(s.to_string())),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn display_and_parse() {
        let w: Word = "0110".parse().unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w.to_string(), "0110");
        assert_eq!(Word::empty().to_string(), "λ");
        assert!("012".parse::<Word>().is_err());
    }

    #[test]
    fn crosses_limb_boundary() {
        let mut w = Word::empty();
        for i in 0..130 {
            w.push(Symbol::from_bit(i % 3 == 0));
        }
        assert_eq!(w.len(), 130);
        assert_eq!(w.get(129), Symbol::One);
        assert_eq!(w.get(128), Symbol::Zero);
        assert_eq!(w.prefix(64).len(), 64);
        assert_eq!(w.prefix(70), w.symbols().take(70).collect::<Word>());
    }

    proptest! {
        #[test]
        fn extend_shares_prefix(bits in any::<u64>(), len in 0usize..64, b in any::<bool>()) {
            let w = Word::from_bits(bits, len);
            let e = w.extended(Symbol::from_bit(b));
            prop_assert_eq!(e.len(), len + 1);
            prop_assert_eq!(e.prefix(len), w.clone());
            prop_assert_eq!(e.get(len), Symbol::from_bit(b));
            let parsed: Word = e.to_string().parse().unwrap();
            prop_assert_eq!(parsed, e);
        }
    }
}
