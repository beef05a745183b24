//! Model vectors, enumeration of the model space and the shared cache of
//! evaluated models.
//!
//! A model is identified by a fixed-length binary vector γ where bit `i`
//! (zero-based) marks inclusion of covariate `i + 1`. The canonical text
//! form writes covariate 1 leftmost, so `"1010"` includes covariates 1 and 3.
//! The integer encoding is little-endian in the index: covariate 1 is bit 0.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Largest covariate count for which full enumeration is allowed.
pub const ENUMERATION_LIMIT: usize = 25;

const WORD: usize = 64;

/// Binary inclusion vector identifying one model.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelVector {
    len: usize,
    words: SmallVec<[u64; 2]>,
}

impl ModelVector {
    /// The null model: no covariates included.
    pub fn zeros(len: usize) -> Self {
        let words = SmallVec::from_elem(0u64, len.div_ceil(WORD));
        ModelVector { len, words }
    }

    /// The full model.
    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            v.set(i, true);
        }
        v
    }

    /// Builds a vector of length `len` with the given zero-based indices set.
    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut v = Self::zeros(len);
        for &i in indices {
            if i >= len {
                return Err(Error::InvalidArgument(format!("index {i} out of range for length {len}")));
            }
            v.set(i, true);
        }
        Ok(v)
    }

    /// Decodes the little-endian integer encoding (covariate 1 is bit 0).
    pub fn from_code(len: usize, code: u64) -> Self {
        let mut v = Self::zeros(len);
        if len > 0 {
            let mask = if len >= WORD { u64::MAX } else { (1u64 << len) - 1 };
            v.words[0] = code & mask;
        }
        v
    }

    /// Little-endian integer encoding; `None` when the vector is longer than 64.
    pub fn code(&self) -> Option<u64> {
        if self.len > WORD {
            None
        } else {
            Some(self.words.first().copied().unwrap_or(0))
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let bit = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= bit;
        } else {
            self.words[i / WORD] &= !bit;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    /// Number of included covariates |γ|.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Zero-based indices of included covariates, ascending.
    pub fn ones_indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }

    /// Returns a copy with exactly the bits at `indices` flipped.
    ///
    /// Repeated indices flip repeatedly, so callers are expected to pass a set.
    pub fn swap(&self, indices: &[usize]) -> Result<ModelVector> {
        let mut out = self.clone();
        for &i in indices {
            if i >= self.len {
                return Err(Error::InvalidArgument(format!("swap index {i} out of range for length {}", self.len)));
            }
            out.flip(i);
        }
        Ok(out)
    }

    /// Number of positions where `self` and `other` differ.
    pub fn hamming(&self, other: &ModelVector) -> Result<usize> {
        if self.len != other.len {
            return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", self.len, other.len)));
        }
        Ok(self.words.iter().zip(other.words.iter()).map(|(a, b)| (a ^ b).count_ones() as usize).sum())
    }

    /// Zero-based positions where `self` and `other` differ. Lengths must match.
    pub fn diff_indices(&self, other: &ModelVector) -> Vec<usize> {
        debug_assert_eq!(self.len, other.len);
        let mut out = Vec::new();
        for (w, (a, b)) in self.words.iter().zip(other.words.iter()).enumerate() {
            let mut x = a ^ b;
            while x != 0 {
                let t = x.trailing_zeros() as usize;
                out.push(w * WORD + t);
                x &= x - 1;
            }
        }
        out
    }
}

impl fmt::Display for ModelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for ModelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelVector({self})")
    }
}

impl FromStr for ModelVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut v = ModelVector::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "invalid model character {other:?} at position {}",
                        i + 1
                    )))
                }
            }
        }
        Ok(v)
    }
}

/// Streams all 2^p models in integer-encoding order.
pub fn enumerate_all(p: usize) -> Result<impl Iterator<Item = ModelVector>> {
    if p > ENUMERATION_LIMIT {
        return Err(Error::ResourceLimit(format!(
            "enumeration of 2^{p} models exceeds the limit of 2^{ENUMERATION_LIMIT}"
        )));
    }
    Ok((0..(1u64 << p)).map(move |code| ModelVector::from_code(p, code)))
}

/// Cached evaluation of a single model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelRecord {
    pub log_mlik: f64,
    pub log_prior: f64,
    pub visit_count: u64,
}

impl ModelRecord {
    /// Unnormalized log posterior, log p(y|γ) + log p(γ).
    pub fn log_target(&self) -> f64 {
        self.log_mlik + self.log_prior
    }
}

/// Recomputation-free store of evaluated models.
///
/// Lookups and inserts may come from several workers. When two workers race
/// on the same key both compute, the first insert wins and the second result
/// is discarded; scorers are pure so both values are identical.
#[derive(Debug, Default)]
pub struct ModelCache {
    map: Mutex<HashMap<ModelVector, ModelRecord>>,
    computed: AtomicUsize,
}

impl ModelCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the cached record for `gamma`, computing it with `scorer` on a
    /// miss. The visit count is incremented either way. A failing scorer
    /// leaves the cache untouched.
    pub fn get_or_compute<F>(&self, gamma: &ModelVector, scorer: F) -> Result<ModelRecord>
    where
        F: FnOnce(&ModelVector) -> Result<(f64, f64)>,
    {
        {
            let mut map = self.map.lock().expect("model cache poisoned");
            if let Some(rec) = map.get_mut(gamma) {
                rec.visit_count += 1;
                return Ok(*rec);
            }
        }
        let (log_mlik, log_prior) = scorer(gamma)?;
        self.computed.fetch_add(1, Ordering::Relaxed);
        let mut map = self.map.lock().expect("model cache poisoned");
        let rec = map.entry(gamma.clone()).or_insert(ModelRecord { log_mlik, log_prior, visit_count: 0 });
        rec.visit_count += 1;
        Ok(*rec)
    }

    pub fn get(&self, gamma: &ModelVector) -> Option<ModelRecord> {
        self.map.lock().expect("model cache poisoned").get(gamma).copied()
    }

    /// Number of distinct models stored.
    pub fn len(&self) -> usize {
        self.map.lock().expect("model cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total scorer invocations, including duplicates lost to races.
    pub fn compute_count(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    /// All records, sorted by model for deterministic iteration.
    pub fn records(&self) -> Vec<(ModelVector, ModelRecord)> {
        let map = self.map.lock().expect("model cache poisoned");
        let mut out: Vec<_> = map.iter().map(|(k, v)| (k.clone(), *v)).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mv(s: &str) -> ModelVector {
        s.parse().unwrap()
    }

    #[test]
    fn swap_flips_listed_bits() {
        assert_eq!(mv("0000").swap(&[0, 2]).unwrap(), mv("1010"));
        // Table-2 large jump: covariates 3, 4, 8, 9 swapped.
        assert_eq!(mv("1010110111").swap(&[2, 3, 7, 8]).unwrap(), mv("1001110001"));
        assert_eq!(mv("0110").swap(&[]).unwrap(), mv("0110"));
    }

    #[test]
    fn swap_rejects_out_of_range() {
        assert!(matches!(mv("000").swap(&[3]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(mv("0101").hamming(&mv("0101")).unwrap(), 0);
        assert_eq!(mv("0000").hamming(&mv("1111")).unwrap(), 4);
        assert_eq!(mv("1010110111").hamming(&mv("1101100001")).unwrap(), 6);
        assert!(mv("00").hamming(&mv("000")).is_err());
    }

    #[test]
    fn text_round_trip_and_encoding() {
        let v = mv("1101");
        assert_eq!(v.to_string(), "1101");
        // covariate 1 is bit 0
        assert_eq!(v.code(), Some(0b1011));
        assert_eq!(ModelVector::from_code(4, 0b1011), v);
        assert_eq!(v.count_ones(), 3);
        assert_eq!(v.ones_indices(), vec![0, 1, 3]);
        assert!("10a1".parse::<ModelVector>().is_err());
    }

    #[test]
    fn long_vectors_span_words() {
        let mut v = ModelVector::zeros(130);
        v.set(0, true);
        v.set(64, true);
        v.set(129, true);
        assert_eq!(v.count_ones(), 3);
        assert_eq!(v.code(), None);
        assert_eq!(v.diff_indices(&ModelVector::zeros(130)), vec![0, 64, 129]);
        assert_eq!(ModelVector::ones(130).count_ones(), 130);
    }

    #[test]
    fn enumeration_small_cases() {
        let all: Vec<_> = enumerate_all(1).unwrap().collect();
        assert_eq!(all, vec![mv("0"), mv("1")]);
        assert_eq!(enumerate_all(2).unwrap().count(), 4);
        assert_eq!(enumerate_all(15).unwrap().count(), 32768);
        assert!(matches!(enumerate_all(26), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn enumeration_is_exhaustive_without_duplicates() {
        for p in 0..=12usize {
            let set: std::collections::HashSet<_> = enumerate_all(p).unwrap().collect();
            assert_eq!(set.len(), 1 << p);
        }
    }

    #[test]
    fn cache_computes_once() {
        let cache = ModelCache::new();
        let calls = std::cell::Cell::new(0);
        let scorer = |_: &ModelVector| {
            calls.set(calls.get() + 1);
            Ok((1.0, -2.0))
        };
        let g = mv("101");
        cache.get_or_compute(&g, scorer).unwrap();
        let rec = cache.get_or_compute(&g, scorer).unwrap();
        assert_eq!(calls.get(), 1);
        assert_eq!(rec.visit_count, 2);
        assert_eq!(rec.log_target(), -1.0);
        cache.get_or_compute(&mv("001"), scorer).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.compute_count(), 2);
    }

    #[test]
    fn cache_failure_inserts_nothing() {
        let cache = ModelCache::new();
        let r = cache.get_or_compute(&mv("1"), |_| Err(Error::SingularDesign));
        assert_eq!(r, Err(Error::SingularDesign));
        assert!(cache.is_empty());
        assert_eq!(cache.compute_count(), 0);
    }

    #[test]
    fn cache_tot_eff_accounting() {
        // 3276 lookups over 1906 distinct models: one computation per model.
        let cache = ModelCache::new();
        for i in 0..3276u64 {
            let g = ModelVector::from_code(15, i % 1906);
            cache.get_or_compute(&g, |_| Ok((0.0, 0.0))).unwrap();
        }
        assert_eq!(cache.compute_count(), 1906);
        assert_eq!(cache.len(), 1906);
        let visits: u64 = cache.records().iter().map(|(_, r)| r.visit_count).sum();
        assert_eq!(visits, 3276);
    }

    proptest! {
        #[test]
        fn swap_is_length_preserving_involution(
            code in 0u64..(1 << 20),
            idx in proptest::collection::btree_set(0usize..20, 0..20),
        ) {
            let g = ModelVector::from_code(20, code);
            let j: Vec<usize> = idx.into_iter().collect();
            let once = g.swap(&j).unwrap();
            prop_assert_eq!(once.len(), 20);
            prop_assert_eq!(once.hamming(&g).unwrap(), j.len());
            prop_assert_eq!(once.swap(&j).unwrap(), g);
        }

        #[test]
        fn cache_idempotent(codes in proptest::collection::vec(0u64..64, 1..200)) {
            let cache = ModelCache::new();
            let mut calls = HashMap::new();
            for &c in &codes {
                let g = ModelVector::from_code(6, c);
                cache.get_or_compute(&g, |m| {
                    *calls.entry(m.clone()).or_insert(0) += 1;
                    Ok((c as f64, 0.0))
                }).unwrap();
            }
            prop_assert!(calls.values().all(|&n| n == 1));
            prop_assert_eq!(cache.compute_count(), calls.len());
        }
    }
}
