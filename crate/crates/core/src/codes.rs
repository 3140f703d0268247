//! Binary hash codes and the two similarity primitives used everywhere else.
//!
//! A code of `d` bits stores dimension `64 * j + i` in bit `i` of word `j`.
//! A set bit stands for `+1`, a clear bit for `-1`. Bits past `d` in the last
//! word are always zero, so distances can popcount whole words.

use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};

/// Norm below which a vector is treated as degenerate by [`cosine_similarity`].
pub const MIN_NORM: f64 = 1e-12;

/// Number of bits in a hash code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodeLength(usize);

impl CodeLength {
    /// Lengths evaluated in the code-length study; these fill whole words.
    pub const STANDARD: [usize; 4] = [64, 128, 256, 512];

    pub fn new(bits: usize) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidInput("code length must be positive".into()));
        }
        Ok(CodeLength(bits))
    }

    pub fn bits(self) -> usize {
        self.0
    }

    pub fn words(self) -> usize {
        self.0.div_ceil(64)
    }

    pub fn is_padded(self) -> bool {
        !self.0.is_multiple_of(64)
    }

    /// Mask for the last storage word; all ones when `d` is a multiple of 64.
    pub fn tail_mask(self) -> u64 {
        match self.0 % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }
}

impl fmt::Display for CodeLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Real-valued encoder output, prior to quantization. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding must not be empty".into()));
        }
        Ok(Embedding(values))
    }

    pub fn len_bits(&self) -> CodeLength {
        CodeLength(self.0.len())
    }

    pub fn quantize(&self) -> BinaryCode {
        quantize_unchecked(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Packed `{-1, +1}^d` hash code.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    words: Vec<u64>,
    len: CodeLength,
}

impl BinaryCode {
    /// Builds a code from raw storage words. Fails if the word count is wrong
    /// or any padding bit is set.
    pub fn from_words(words: Vec<u64>, len: CodeLength) -> Result<Self> {
        if words.len() != len.words() {
            return Err(Error::InvalidInput(format!(
                "{} bits need {} words, got {}",
                len,
                len.words(),
                words.len()
            )));
        }
        if let Some(last) = words.last() {
            if last & !len.tail_mask() != 0 {
                return Err(Error::InvalidInput(format!(
                    "padding bits beyond bit {} are set",
                    len.bits()
                )));
            }
        }
        Ok(BinaryCode { words, len })
    }

    /// All bits clear, i.e. the all `-1` code.
    pub fn zeros(len: CodeLength) -> Self {
        BinaryCode {
            words: vec![0; len.words()],
            len,
        }
    }

    pub fn len(&self) -> CodeLength {
        self.len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len.bits(), "bit {i} out of range for {} bits", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Bitwise complement within the first `d` bits.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= self.len.tail_mask();
        }
        BinaryCode {
            words,
            len: self.len,
        }
    }

    /// The code as a `{-1, +1}` vector.
    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.len.bits())
            .map(|i| if self.bit(i) { 1 } else { -1 })
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len.bits())
            .map(|i| if self.bit(i) { 1.0 } else { -1.0 })
            .collect()
    }

    /// Text form, one `0`/`1` character per dimension starting at dimension 0.
    pub fn to_bit_string(&self) -> String {
        (0..self.len.bits())
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let len = CodeLength::new(s.len())?;
        let mut words = vec![0u64; len.words()];
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => words[i / 64] |= 1 << (i % 64),
                '0' => {}
                other => {
                    return Err(Error::InvalidInput(format!(
                        "bit string contains {other:?} at position {i}"
                    )))
                }
            }
        }
        Ok(BinaryCode { words, len })
    }
}

impl fmt::Debug for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryCode({})", self.to_bit_string())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "non-finite value {} at index {i}",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn quantize_unchecked(values: &[f64]) -> BinaryCode {
    let len = CodeLength(values.len());
    let mut words = vec![0u64; len.words()];
    for (i, &v) in values.iter().enumerate() {
        // sign(0) maps to -1
        if v > 0.0 {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    BinaryCode { words, len }
}

/// Sign quantization: bit `i` is set iff `values[i] > 0`.
pub fn sign_quantize(values: &[f64]) -> Result<BinaryCode> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot quantize an empty vector".into()));
    }
    check_finite(values)?;
    Ok(quantize_unchecked(values))
}

/// Packs a `{-1, +1}` vector.
pub fn pack_bits(signs: &[i8]) -> Result<BinaryCode> {
    let len = CodeLength::new(signs.len())?;
    let mut words = vec![0u64; len.words()];
    for (i, &s) in signs.iter().enumerate() {
        match s {
            1 => words[i / 64] |= 1 << (i % 64),
            -1 => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "sign vector holds {other} at index {i}; expected -1 or +1"
                )))
            }
        }
    }
    Ok(BinaryCode { words, len })
}

/// Inverse of [`pack_bits`]; `expected` guards against length confusion.
pub fn unpack_bits(code: &BinaryCode, expected: CodeLength) -> Result<Vec<i8>> {
    if code.len() != expected {
        return Err(Error::InvalidInput(format!(
            "code has {} bits, expected {}",
            code.len(),
            expected
        )));
    }
    Ok(code.to_signs())
}

/// Popcount of `a XOR b` over equal-length word slices.
///
/// Callers guarantee both slices carry zero padding.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn hamming_distance(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.len != b.len {
        return Err(Error::InvalidInput(format!(
            "hamming distance between {}-bit and {}-bit codes",
            a.len, b.len
        )));
    }
    Ok(hamming_words(&a.words, &b.words))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "cosine similarity between lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if !(na >= MIN_NORM && nb >= MIN_NORM) {
        return Err(Error::Degenerate(format!(
            "vector norm below {MIN_NORM:e} (norms {na:e}, {nb:e})"
        )));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
