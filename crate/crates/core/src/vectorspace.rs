//! Binary and continuous vector primitives.
//!
//! Binary vectors are packed into 64-bit words so that Hamming distances are a
//! handful of `popcount` instructions; the neuron engine evaluates millions of
//! them per experiment.  Dense vectors are thin wrappers over `Vec<f64>`.
//!
//! Throughout the crate binary values map onto bipolar values as `0 → −1`,
//! `1 → +1`, which preserves `d(x, y) = (n − xᵀy) / 2`.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SdmError};

const WORD_BITS: usize = 64;

/// Fixed-length packed binary vector.
///
/// Bits beyond `len` in the last word are always zero, so word-wise
/// operations never need to re-mask.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    /// All-zero vector of dimension `n`.
    ///
    /// # Panics
    /// Panics if `n == 0`; a zero-dimensional address space is meaningless.
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "BitVector dimension must be at least 1");
        BitVector {
            words: vec![0; n.div_ceil(WORD_BITS)],
            len: n,
        }
    }

    pub fn ones(n: usize) -> Self {
        let mut v = Self::zeros(n);
        v.words.iter_mut().for_each(|w| *w = u64::MAX);
        v.mask_tail();
        v
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut v = Self::zeros(n);
        for i in 0..n {
            if f(i) {
                v.set(i, true);
            }
        }
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::from_fn(bits.len(), |i| bits[i])
    }

    /// Builds a vector from the low `n` bits of `value` (bit `i` of `value`
    /// becomes component `i`).  Convenient for exhaustive enumeration of small
    /// spaces.
    pub fn from_u64(value: u64, n: usize) -> Self {
        assert!(n <= WORD_BITS, "from_u64 supports n <= 64");
        let mut v = Self::zeros(n);
        v.words[0] = value;
        v.mask_tail();
        v
    }

    /// Uniformly random vector: every bit is an independent fair coin.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut v = Self::zeros(n);
        for w in v.words.iter_mut() {
            *w = rng.random();
        }
        v.mask_tail();
        v
    }

    fn mask_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false: dimensions are at least one.  Present for API symmetry.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if bit {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        let mut v = BitVector {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        v.mask_tail();
        v
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Hamming distance without a length check.  Callers that cannot
    /// guarantee equal lengths should use [`hamming_distance`].
    #[inline]
    pub fn distance(&self, other: &BitVector) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Bipolar image of the vector (`0 → −1`, `1 → +1`).
    pub fn to_bipolar(&self) -> BipolarVector {
        BipolarVector(self.iter().map(|b| if b { 1 } else { -1 }).collect())
    }
}

/// Real-valued vector used by the continuous engines.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct DenseVector {
    pub values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Self {
        DenseVector { values }
    }

    pub fn zeros(n: usize) -> Self {
        DenseVector { values: vec![0.0; n] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn dot(&self, other: &DenseVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit-norm copy.  A zero vector is returned unchanged.
    pub fn normalized(&self) -> DenseVector {
        let norm = self.norm();
        if norm == 0.0 {
            return self.clone();
        }
        DenseVector::new(self.values.iter().map(|v| v / norm).collect())
    }

    /// Cosine similarity; zero if either vector has zero norm.
    pub fn cosine(&self, other: &DenseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

/// Dot product with four independent accumulators, which lets the compiler
/// keep several FMA chains in flight.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Vector with entries in {−1, +1}.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct BipolarVector(pub Vec<i8>);

impl BipolarVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_bits(&self) -> BitVector {
        BitVector::from_fn(self.0.len(), |i| self.0[i] > 0)
    }

    pub fn dot(&self, other: &BipolarVector) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| i64::from(a) * i64::from(b))
            .sum()
    }
}

/// Whether pointers are the addresses themselves or separate vectors.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationMode {
    Autoassociative,
    Heteroassociative,
}

/// Paired pattern addresses and pointers.
///
/// In autoassociative mode the pointers *are* the addresses and are not
/// stored twice.
#[derive(Clone, Debug)]
pub struct PatternStore<V> {
    addresses: Vec<V>,
    pointers: Option<Vec<V>>,
}

/// Anything that has a dimension; lets [`PatternStore`] validate rows.
pub trait Dimensioned {
    fn dim(&self) -> usize;
}

impl Dimensioned for BitVector {
    fn dim(&self) -> usize {
        self.len()
    }
}

impl Dimensioned for DenseVector {
    fn dim(&self) -> usize {
        self.len()
    }
}

impl Dimensioned for BipolarVector {
    fn dim(&self) -> usize {
        self.len()
    }
}

fn check_rows<V: Dimensioned>(rows: &[V], what: &str) -> Result<usize> {
    let first = rows
        .first()
        .ok_or_else(|| SdmError::domain(format!("{what} must contain at least one row")))?;
    let n = first.dim();
    for row in rows {
        check_dim(n, row.dim())?;
    }
    Ok(n)
}

impl<V: Dimensioned> PatternStore<V> {
    pub fn autoassociative(addresses: Vec<V>) -> Result<Self> {
        check_rows(&addresses, "pattern addresses")?;
        Ok(PatternStore {
            addresses,
            pointers: None,
        })
    }

    pub fn heteroassociative(addresses: Vec<V>, pointers: Vec<V>) -> Result<Self> {
        check_rows(&addresses, "pattern addresses")?;
        check_rows(&pointers, "pattern pointers")?;
        check_dim(addresses.len(), pointers.len())?;
        Ok(PatternStore {
            addresses,
            pointers: Some(pointers),
        })
    }

    pub fn mode(&self) -> AssociationMode {
        if self.pointers.is_some() {
            AssociationMode::Heteroassociative
        } else {
            AssociationMode::Autoassociative
        }
    }

    /// Number of stored patterns `m`.
    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    pub fn address_dim(&self) -> usize {
        self.addresses[0].dim()
    }

    pub fn pointer_dim(&self) -> usize {
        self.pointers()[0].dim()
    }

    pub fn addresses(&self) -> &[V] {
        &self.addresses
    }

    pub fn pointers(&self) -> &[V] {
        self.pointers.as_deref().unwrap_or(&self.addresses)
    }
}

/// Checked Hamming distance.
pub fn hamming_distance(a: &BitVector, b: &BitVector) -> Result<usize> {
    check_dim(a.len(), b.len())?;
    Ok(a.distance(b))
}

/// Maps `{0,1}ⁿ` to the unit sphere: `0 → −1/√n`, `1 → +1/√n`.
pub fn binary_to_unit(v: &BitVector) -> DenseVector {
    let s = 1.0 / (v.len() as f64).sqrt();
    DenseVector::new(v.iter().map(|b| if b { s } else { -s }).collect())
}

/// `1 − 2·d_v/n`.
pub fn hamming_to_cosine(d_v: usize, n: usize) -> Result<f64> {
    if n == 0 || d_v > n {
        return Err(SdmError::domain(format!(
            "hamming distance {d_v} outside [0, {n}]"
        )));
    }
    Ok(1.0 - 2.0 * d_v as f64 / n as f64)
}

/// `⌊(n/2)(1 − c)⌋`.
///
/// A tolerance of 1e-9 bits is added before flooring so that cosines computed
/// as dot products of unit vectors, which may land one ulp short of an exact
/// grid value, still map back onto the right integer.
pub fn cosine_to_hamming(c: f64, n: usize) -> Result<usize> {
    if n == 0 || !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&c) {
        return Err(SdmError::domain(format!("cosine {c} outside [-1, 1]")));
    }
    let x = 0.5 * n as f64 * (1.0 - c) + 1e-9;
    Ok((x.floor().max(0.0) as usize).min(n))
}

/// Flips exactly `k` distinct, uniformly chosen positions.
pub fn perturb_binary<R: Rng + ?Sized>(v: &BitVector, k: usize, rng: &mut R) -> Result<BitVector> {
    let n = v.len();
    if k > n {
        return Err(SdmError::domain(format!(
            "cannot flip {k} bits of a {n}-bit vector"
        )));
    }
    let mut out = v.clone();
    for i in index::sample(rng, n, k).iter() {
        out.flip(i);
    }
    Ok(out)
}

/// Maximum number of random directions drawn before giving up on finding one
/// that is not parallel to the input.
pub const MAX_DIRECTION_ATTEMPTS: usize = 16;

/// Returns a unit vector `w` with `vᵀw = target_cos`, built as
/// `cos·v + sin·u` where `u` is a random direction orthogonal to `v`.
pub fn perturb_continuous<R: Rng + ?Sized>(
    v: &DenseVector,
    target_cos: f64,
    rng: &mut R,
) -> Result<DenseVector> {
    if !(target_cos > -1.0 && target_cos <= 1.0) {
        return Err(SdmError::domain(format!(
            "target cosine {target_cos} outside (-1, 1]"
        )));
    }
    if !v.is_unit(1e-9) {
        return Err(SdmError::domain("perturb_continuous requires a unit-norm input"));
    }
    if target_cos == 1.0 {
        return Ok(v.clone());
    }
    let n = v.len();
    for _ in 0..MAX_DIRECTION_ATTEMPTS {
        let mut u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        // Two Gram–Schmidt passes keep the residual orthogonal to ~1e-16.
        for _ in 0..2 {
            let proj = dot(&u, &v.values);
            for (ui, vi) in u.iter_mut().zip(&v.values) {
                *ui -= proj * vi;
            }
        }
        let norm = dot(&u, &u).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let sin = (1.0 - target_cos * target_cos).max(0.0).sqrt();
        let w: Vec<f64> = v
            .values
            .iter()
            .zip(&u)
            .map(|(vi, ui)| target_cos * vi + sin * ui / norm)
            .collect();
        return Ok(DenseVector::new(w));
    }
    Err(SdmError::DegenerateDirection {
        attempts: MAX_DIRECTION_ATTEMPTS,
    })
}

/// Which threshold the majority rule applies.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ThresholdKind {
    /// Normalized weighted average of binary pointers; `1` iff `e > 1/2`.
    Binary,
    /// Unnormalized bipolar sum; `+1` iff `e > 0`.
    Bipolar,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum MajorityOutput {
    Binary(BitVector),
    Bipolar(BipolarVector),
}

/// Elementwise threshold `g`.  Values exactly at the threshold go to the
/// lower branch (`0` or `−1`).
pub fn majority_rule(sum: &[f64], kind: ThresholdKind) -> MajorityOutput {
    match kind {
        ThresholdKind::Binary => MajorityOutput::Binary(majority_binary(sum)),
        ThresholdKind::Bipolar => MajorityOutput::Bipolar(majority_bipolar(sum)),
    }
}

pub fn majority_binary(average: &[f64]) -> BitVector {
    BitVector::from_fn(average.len(), |i| average[i] > 0.5)
}

pub fn majority_bipolar(sum: &[f64]) -> BipolarVector {
    BipolarVector(sum.iter().map(|&e| if e > 0.0 { 1 } else { -1 }).collect())
}
