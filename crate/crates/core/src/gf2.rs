//! Packed GF(2) vectors and matrices.
//!
//! Bit `i` of a [`BitVec`] lives in word `i / 64` at bit position `i % 64`
//! (little-endian within each word). Padding bits past `len` are kept zero.
//!
//! The JSON form is `{"len": n, "hex": "..."}`. The hex string is the vector
//! read as the integer `sum(b_i * 2^i)`, written most-significant nibble first
//! with exactly `ceil(len / 4)` lowercase digits. So `{"len": 4, "hex": "a"}`
//! has bits 1 and 3 set. A [`BitMatrix`] adds `rows` and `cols` and encodes its
//! row-major flattening (bit `r * cols + c`) the same way.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

/// Fixed-length bit string over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Parses a string of `0`/`1` characters; character `i` becomes bit `i`.
    /// Whitespace and `_` are ignored.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Hex(format!(
                    "unexpected character {other:?} in bit string"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bools(&bits))
    }

    /// Builds a vector from raw words; bits past `len` are cleared.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        let mut v = Self { len, words };
        v.clear_padding();
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity (XOR of all bits).
    pub fn parity(&self) -> bool {
        self.words
            .iter()
            .fold(0u32, |acc, w| acc ^ (w.count_ones() & 1))
            == 1
    }

    /// Index of the lowest set bit.
    pub fn first_one(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(k, w)| k * WORD_BITS + w.trailing_zeros() as usize)
    }

    /// In-place XOR with a vector of the same length.
    pub fn xor_assign(&mut self, other: &BitVec) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                found: other.len,
            });
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    /// Appends the bits of `other` after the bits of `self`.
    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut out = BitVec::zeros(self.len + other.len);
        for (i, b) in self.iter().chain(other.iter()).enumerate() {
            if b {
                out.set(i, true);
            }
        }
        out
    }

    /// Bit string in index order, e.g. `"1010"` for bits 0 and 2 set.
    pub fn to_bit_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4);
        (0..digits)
            .rev()
            .map(|d| {
                let mut nibble = 0u32;
                for k in 0..4 {
                    let i = d * 4 + k;
                    if i < self.len && self.get(i) {
                        nibble |= 1 << k;
                    }
                }
                char::from_digit(nibble, 16).expect("nibble < 16")
            })
            .collect()
    }

    pub fn from_hex(len: usize, hex: &str) -> Result<Self> {
        let digits = len.div_ceil(4);
        if hex.len() != digits {
            return Err(Error::Hex(format!(
                "expected {digits} hex digits for {len} bits, found {}",
                hex.len()
            )));
        }
        let mut v = BitVec::zeros(len);
        for (pos, c) in hex.chars().enumerate() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| Error::Hex(format!("invalid hex digit {c:?}")))?;
            let d = digits - 1 - pos;
            for k in 0..4 {
                if nibble >> k & 1 == 1 {
                    let i = d * 4 + k;
                    if i >= len {
                        return Err(Error::Hex(format!("bit {i} set beyond length {len}")));
                    }
                    v.set(i, true);
                }
            }
        }
        Ok(v)
    }

    fn clear_padding(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

/// Returns `acc ⊕ x`.
pub fn xor_into(acc: &BitVec, x: &BitVec) -> Result<BitVec> {
    let mut out = acc.clone();
    out.xor_assign(x)?;
    Ok(out)
}

impl BitXor for &BitVec {
    type Output = BitVec;

    /// Panics on length mismatch; use [`xor_into`] for a checked version.
    fn bitxor(self, rhs: &BitVec) -> BitVec {
        xor_into(self, rhs).expect("xor of bit vectors with different lengths")
    }
}

impl BitXorAssign<&BitVec> for BitVec {
    fn bitxor_assign(&mut self, rhs: &BitVec) {
        self.xor_assign(rhs)
            .expect("xor of bit vectors with different lengths");
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({})", self.to_bit_string())
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

#[derive(Serialize, Deserialize)]
struct BitVecRepr {
    len: usize,
    hex: String,
}

impl Serialize for BitVec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BitVecRepr {
            len: self.len,
            hex: self.to_hex(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = BitVecRepr::deserialize(d)?;
        BitVec::from_hex(repr.len, &repr.hex).map_err(D::Error::custom)
    }
}

/// Dense GF(2) matrix with packed rows.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVec>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix from rows of `0`/`1` values.
    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.push(BitVec::from_bools(
                &r.iter().map(|&b| b != 0).collect::<Vec<_>>(),
            ));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a `rows × columns.len()` matrix whose `j`th column is `columns[j]`.
    pub fn from_columns(rows: usize, columns: &[BitVec]) -> Result<Self> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::LengthMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            for i in 0..rows {
                if c.get(i) {
                    m.set(i, j, true);
                }
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.data[r].set(c, value)
    }

    pub fn row(&self, r: usize) -> &BitVec {
        &self.data[r]
    }

    pub fn column(&self, c: usize) -> BitVec {
        let mut v = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            if self.get(r, c) {
                v.set(r, true);
            }
        }
        v
    }

    pub fn columns(&self) -> impl Iterator<Item = BitVec> + '_ {
        (0..self.cols).map(move |c| self.column(c))
    }

    /// `[self, other]`: columns of `other` appended after those of `self`.
    pub fn concat_cols(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.rows != other.rows {
            return Err(Error::LengthMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.concat(b))
            .collect();
        Ok(BitMatrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }

    /// GF(2) rank by row reduction on a private copy.
    pub fn rank(&self) -> usize {
        rank(self)
    }

    fn flattened(&self) -> BitVec {
        let mut v = BitVec::zeros(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    v.set(r * self.cols + c, true);
                }
            }
        }
        v
    }
}

/// GF(2) rank of `m`. The input is left untouched.
pub fn rank(m: &BitMatrix) -> usize {
    let mut rows: Vec<BitVec> = m.data.clone();
    let mut rank = 0;
    for col in 0..m.cols {
        let word = col / WORD_BITS;
        let mask = 1u64 << (col % WORD_BITS);
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r].words[word] & mask != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let (head, tail) = rows.split_at_mut(rank + 1);
        let pivot_row = &head[rank];
        for row in tail.iter_mut() {
            if row.words[word] & mask != 0 {
                for (a, b) in row.words.iter_mut().zip(&pivot_row.words).skip(word) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for row in &self.data {
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct BitMatrixRepr {
    rows: usize,
    cols: usize,
    len: usize,
    hex: String,
}

impl Serialize for BitMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BitMatrixRepr {
            rows: self.rows,
            cols: self.cols,
            len: self.rows * self.cols,
            hex: self.flattened().to_hex(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BitMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = BitMatrixRepr::deserialize(d)?;
        if repr.len != repr.rows * repr.cols {
            return Err(D::Error::custom("len must equal rows * cols"));
        }
        let flat = BitVec::from_hex(repr.len, &repr.hex).map_err(D::Error::custom)?;
        let mut m = BitMatrix::zeros(repr.rows, repr.cols);
        for r in 0..repr.rows {
            for c in 0..repr.cols {
                if flat.get(r * repr.cols + c) {
                    m.set(r, c, true);
                }
            }
        }
        Ok(m)
    }
}

/// Values this close outside `[0, 1]` are treated as rounding residue.
pub const PROBABILITY_SLACK: f64 = 1e-12;

/// Binary entropy `h(η) = −η log₂ η − (1−η) log₂(1−η)` with `0 · log 0 = 0`.
pub fn binary_entropy(eta: f64) -> Result<f64> {
    if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&eta) || eta.is_nan() {
        return Err(Error::Domain {
            what: "binary entropy argument",
            value: eta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let eta = eta.clamp(0.0, 1.0);
    Ok(plogp(eta) + plogp(1.0 - eta))
}

/// Infallible form of [`binary_entropy`] for callers that already hold a
/// valid probability. Panics outside the accepted domain.
pub fn h2(eta: f64) -> f64 {
    binary_entropy(eta).expect("probability outside [0, 1]")
}

fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> BitVec {
        BitVec::from_bit_str(s).unwrap()
    }

    #[test]
    fn xor_examples() {
        assert_eq!(xor_into(&bv("1010"), &bv("0000")).unwrap(), bv("1010"));
        assert_eq!(xor_into(&bv("1010"), &bv("1010")).unwrap(), bv("0000"));
        assert_eq!(xor_into(&bv("1100"), &bv("1010")).unwrap(), bv("0110"));
    }

    #[test]
    fn xor_length_mismatch() {
        let err = xor_into(&bv("101"), &bv("1010")).unwrap_err();
        assert_eq!(
            err,
            Error::LengthMismatch {
                expected: 3,
                found: 4
            }
        );
    }

    #[test]
    fn padding_stays_clear() {
        let v = BitVec::from_words(70, vec![u64::MAX, u64::MAX]);
        assert_eq!(v.count_ones(), 70);
        assert_eq!(v.words()[1], (1 << 6) - 1);
        let x = &v ^ &v;
        assert!(x.is_zero());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(BitMatrix::identity(7).rank(), 7);
        assert_eq!(BitMatrix::zeros(4, 3).rank(), 0);
        let m = BitMatrix::from_rows(&[&[1, 1], &[1, 1], &[0, 1]]).unwrap();
        assert_eq!(rank(&m), 2);
        assert_eq!(BitMatrix::zeros(0, 0).rank(), 0);
        assert_eq!(BitMatrix::zeros(5, 0).rank(), 0);
    }

    #[test]
    fn rank_does_not_mutate() {
        let m = BitMatrix::from_rows(&[&[1, 1, 0], &[0, 1, 1], &[1, 0, 1]]).unwrap();
        let before = m.clone();
        assert_eq!(m.rank(), 2);
        assert_eq!(m, before);
    }

    #[test]
    fn rank_wide_matrix_crosses_words() {
        let mut m = BitMatrix::zeros(3, 130);
        m.set(0, 129, true);
        m.set(1, 64, true);
        m.set(2, 64, true);
        m.set(2, 129, true);
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        let direct = -0.11f64 * 0.11f64.log2() - 0.89f64 * 0.89f64.log2();
        assert!((binary_entropy(0.11).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 0.49992).abs() < 1e-4);
    }

    #[test]
    fn entropy_domain() {
        assert_eq!(binary_entropy(-1e-13).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0 + 1e-13).unwrap(), 0.0);
        assert!(binary_entropy(-1e-9).is_err());
        assert!(binary_entropy(1.1).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn hex_layout() {
        let v = bv("0101");
        assert_eq!(v.to_hex(), "a");
        let v = bv("10000");
        assert_eq!(v.to_hex(), "01");
        assert_eq!(BitVec::from_hex(5, "01").unwrap(), v);
        assert!(BitVec::from_hex(5, "20").is_err());
        assert!(BitVec::from_hex(5, "1").is_err());
        assert_eq!(BitVec::zeros(0).to_hex(), "");
    }

    #[test]
    fn json_shape() {
        let v = bv("0101");
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"len":4,"hex":"a"}"#);
        let m = BitMatrix::from_rows(&[&[1, 0], &[0, 1]]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"rows":2,"cols":2,"len":4,"hex":"9"}"#);
        let back: BitMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
