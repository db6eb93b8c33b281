//! Fixed-length bit strings used for questions, answers and operator exponents.
//!
//! Bits are addressed 1-indexed from the left, so `"0110".get(2) == true`.
//! The packed integer value orders strings lexicographically, which is also the
//! tie-breaking order of every search in this crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Longest supported bit string.
pub const MAX_BITS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct BitString {
    len: u32,
    value: u64,
}

fn mask(len: usize) -> u64 {
    if len == 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

impl BitString {
    /// Builds a string from its packed value; bit 1 is the most significant.
    pub fn new(len: usize, value: u64) -> Result<Self> {
        if len > MAX_BITS {
            return Err(Error::InvalidLength(format!(
                "bit string length {len} exceeds {MAX_BITS}"
            )));
        }
        if value & !mask(len) != 0 {
            return Err(Error::InvalidLength(format!(
                "value {value} does not fit in {len} bits"
            )));
        }
        Ok(Self {
            len: len as u32,
            value,
        })
    }

    pub(crate) fn from_value(len: usize, value: u64) -> Self {
        debug_assert!(len <= MAX_BITS && value & !mask(len) == 0);
        Self {
            len: len as u32,
            value,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_value(len, 0)
    }

    pub fn ones(len: usize) -> Self {
        Self::from_value(len, mask(len))
    }

    /// The string `1_k`: a single one in position `k`.
    pub fn unit(len: usize, k: usize) -> Result<Self> {
        check_index(len, k)?;
        Ok(Self::from_value(len, 1u64 << (len - k)))
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut out = Self::new(bits.len(), 0)?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.value |= 1u64 << (bits.len() - 1 - i);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Packed value; doubles as the index of this question in observable tables.
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.value as usize
    }

    /// Bit `k` (1-indexed).
    pub fn get(&self, k: usize) -> Result<bool> {
        check_index(self.len(), k)?;
        Ok(self.bit(k))
    }

    #[inline]
    pub(crate) fn bit(&self, k: usize) -> bool {
        (self.value >> (self.len() - k)) & 1 == 1
    }

    /// `x ⊕ 1_k`.
    pub fn flip(&self, k: usize) -> Result<Self> {
        check_index(self.len(), k)?;
        Ok(Self::from_value(self.len(), self.value ^ (1u64 << (self.len() - k))))
    }

    /// `x̄`, every bit flipped.
    pub fn complement(&self) -> Self {
        Self::from_value(self.len(), !self.value & mask(self.len()))
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        same_len(self, other)?;
        Ok(Self::from_value(self.len(), self.value ^ other.value))
    }

    /// Hamming weight `|x|`.
    pub fn weight(&self) -> u32 {
        self.value.count_ones()
    }

    /// `x · y = Σ x_j y_j`.
    pub fn dot(&self, other: &Self) -> Result<u32> {
        same_len(self, other)?;
        Ok((self.value & other.value).count_ones())
    }

    /// Parity of the inner product, `(x · y) mod 2`.
    pub fn dot_parity(&self, other: &Self) -> Result<bool> {
        Ok(self.dot(other)? % 2 == 1)
    }

    /// Splits into `(x_a, x_b)`, the first and last halves.
    pub fn split_halves(&self) -> Result<(Self, Self)> {
        if !self.len().is_multiple_of(2) {
            return Err(Error::OddLength(self.len()));
        }
        let half = self.len() / 2;
        let lo = self.value & mask(half);
        let hi = self.value >> half;
        Ok((Self::from_value(half, hi), Self::from_value(half, lo)))
    }

    /// Concatenation `xy`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let len = self.len() + other.len();
        if len > MAX_BITS {
            return Err(Error::InvalidLength(format!(
                "concatenation length {len} exceeds {MAX_BITS}"
            )));
        }
        let value = if other.len() == 64 {
            other.value
        } else {
            (self.value << other.len()) | other.value
        };
        Ok(Self::from_value(len, value))
    }

    /// All strings of length `len` in lexicographic order.
    pub fn all(len: usize) -> impl Iterator<Item = BitString> {
        assert!(len < MAX_BITS, "cannot enumerate {len}-bit strings");
        (0..(1u64 << len)).map(move |v| BitString::from_value(len, v))
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (1..=self.len()).map(move |k| self.bit(k))
    }
}

fn check_index(len: usize, k: usize) -> Result<()> {
    if k == 0 || k > len {
        return Err(Error::IndexOutOfRange { index: k, len });
    }
    Ok(())
}

fn same_len(a: &BitString, b: &BitString) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidLength(format!(
            "bit strings of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("invalid bit '{other}' in \"{s}\""))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
