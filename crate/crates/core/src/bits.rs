//! Fixed-length bitvectors over the rule catalog.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("hex string has {got} digits, expected {expected} for {len} bits")]
    Length {
        got: usize,
        expected: usize,
        len: usize,
    },
    #[error("invalid hex digit {0:?}")]
    Digit(char),
    #[error("hex string sets bits beyond length {0}")]
    Overflow(usize),
}

/// A bitvector of fixed length, stored in 64-bit words.
///
/// Bit `i` of the hex rendering is read left to right: the first hex digit
/// carries bits 0..4 with bit 0 as its most significant bit, so a vector with
/// only bits 0 and 1 set renders as `c000...`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleBits {
    len: usize,
    words: Vec<u64>,
}

impl RuleBits {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub fn is_subset_of(&self, other: &RuleBits) -> bool {
        self.len == other.len
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    /// Positions where `self` and `other` differ.
    pub fn diff(&self, other: &RuleBits) -> Vec<usize> {
        assert_eq!(self.len, other.len);
        (0..self.len)
            .filter(|&i| self.get(i) != other.get(i))
            .collect()
    }

    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4);
        let mut out = String::with_capacity(digits);
        for d in 0..digits {
            let mut nibble = 0u32;
            for k in 0..4 {
                let i = d * 4 + k;
                if i < self.len && self.get(i) {
                    nibble |= 8 >> k;
                }
            }
            out.push(char::from_digit(nibble, 16).expect("nibble < 16"));
        }
        out
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self, BitsError> {
        let expected = len.div_ceil(4);
        if hex.len() != expected {
            return Err(BitsError::Length {
                got: hex.len(),
                expected,
                len,
            });
        }
        let mut bits = Self::zeros(len);
        for (d, c) in hex.chars().enumerate() {
            let nibble = c.to_digit(16).ok_or(BitsError::Digit(c))?;
            for k in 0..4 {
                if nibble & (8 >> k) != 0 {
                    let i = d * 4 + k;
                    if i >= len {
                        return Err(BitsError::Overflow(len));
                    }
                    bits.set(i, true);
                }
            }
        }
        Ok(bits)
    }
}

impl fmt::Debug for RuleBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RuleBits({})", self.to_hex())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_reads_left_to_right() {
        let mut b = RuleBits::zeros(10);
        b.set(0, true);
        b.set(1, true);
        assert_eq!(b.to_hex(), "c00");
    }

    #[test]
    fn subset_and_diff() {
        let mut a = RuleBits::zeros(70);
        let mut b = RuleBits::zeros(70);
        a.set(65, true);
        b.set(65, true);
        b.set(3, true);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert_eq!(a.diff(&b), vec![3]);
    }

    #[test]
    fn rejects_overflowing_hex() {
        assert_eq!(RuleBits::from_hex("1", 3), Err(BitsError::Overflow(3)));
        assert!(matches!(
            RuleBits::from_hex("zz", 8),
            Err(BitsError::Digit('z'))
        ));
    }

    proptest! {
        #[test]
        fn hex_round_trip(len in 1usize..300, seed in any::<u64>()) {
            let mut b = RuleBits::zeros(len);
            let mut x = seed;
            for i in 0..len {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                b.set(i, x >> 63 == 1);
            }
            let back = RuleBits::from_hex(&b.to_hex(), len).unwrap();
            prop_assert_eq!(back, b);
        }
    }
}
