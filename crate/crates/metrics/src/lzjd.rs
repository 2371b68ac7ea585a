//! Lempel-Ziv Jaccard similarity.
//!
//! Input is parsed LZ78-style into a dictionary of distinct substrings; each
//! entry is hashed to 64 bits and the `k` smallest hashes form a bottom-k
//! sketch. Two sketches estimate the Jaccard index of the hashed sets.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::MetricError;

pub const DEFAULT_SKETCH_SIZE: usize = 1024;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a followed by the MurmurHash3 `fmix64` finalizer.
///
/// FNV-1a alone leaves the high bits of short inputs poorly mixed, which
/// biases a bottom-k selection; the finalizer spreads them.
pub fn hash_entry(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    fmix64(h)
}

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// LZ78-style dictionary of `data`.
///
/// The current phrase grows one byte at a time until it is absent from the
/// dictionary, at which point it is inserted and a new phrase starts. A
/// trailing phrase that is already present is dropped.
pub fn lz_set(data: &[u8]) -> Result<HashSet<&[u8]>, MetricError> {
    if data.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut set = HashSet::new();
    let mut start = 0;
    for end in 1..=data.len() {
        let phrase = &data[start..end];
        if !set.contains(phrase) {
            set.insert(phrase);
            start = end;
        }
    }
    Ok(set)
}

/// Hashes of every entry of the LZ dictionary, deduplicated.
pub fn hashed_lz_set(data: &[u8]) -> Result<HashSet<u64>, MetricError> {
    Ok(lz_set(data)?.into_iter().map(hash_entry).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LzjdSketch {
    k: usize,
    min_hashes: Vec<u64>,
}

impl LzjdSketch {
    pub fn from_data(data: &[u8], k: usize) -> Result<Self, MetricError> {
        if k == 0 {
            return Err(MetricError::InvalidParameter("sketch size must be positive".into()));
        }
        Ok(Self::from_hashes(hashed_lz_set(data)?, k))
    }

    fn from_hashes(hashes: HashSet<u64>, k: usize) -> Self {
        let mut min_hashes: Vec<u64> = hashes.into_iter().collect();
        if min_hashes.len() > k {
            min_hashes.select_nth_unstable(k - 1);
            min_hashes.truncate(k);
        }
        min_hashes.sort_unstable();
        Self { k, min_hashes }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn min_hashes(&self) -> &[u64] {
        &self.min_hashes
    }
}

impl fmt::Display for LzjdSketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.k)?;
        for h in &self.min_hashes {
            write!(f, "{h:016x}")?;
        }
        Ok(())
    }
}

impl FromStr for LzjdSketch {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| MetricError::Parse(format!("lzjd sketch: {why}"));
        let (k, body) = s.split_once(':').ok_or_else(|| bad("missing `k:` prefix"))?;
        let k: usize = k.parse().map_err(|_| bad("k is not an integer"))?;
        if k == 0 || body.len() % 16 != 0 || body.len() / 16 > k {
            return Err(bad("length does not match k"));
        }
        let min_hashes = (0..body.len() / 16)
            .map(|i| u64::from_str_radix(&body[i * 16..(i + 1) * 16], 16))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("non-hex hash"))?;
        if min_hashes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("hashes are not strictly increasing"));
        }
        Ok(Self { k, min_hashes })
    }
}

/// Bottom-k Jaccard estimate.
///
/// Takes the `k` smallest hashes of the union of both sketches and reports the
/// fraction present in both. When both underlying sets have fewer than `k`
/// entries this is the exact Jaccard index of the hashed sets.
pub fn lzjd_similarity(a: &LzjdSketch, b: &LzjdSketch) -> Result<f64, MetricError> {
    if a.k != b.k {
        return Err(MetricError::MismatchedSketchSize(a.k, b.k));
    }
    let (xs, ys) = (&a.min_hashes, &b.min_hashes);
    if xs.is_empty() && ys.is_empty() {
        return Ok(1.0);
    }
    let (mut i, mut j) = (0, 0);
    let mut taken = 0usize;
    let mut shared = 0usize;
    while taken < a.k && (i < xs.len() || j < ys.len()) {
        match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) if x == y => {
                shared += 1;
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => i += 1,
            (Some(_), Some(_)) => j += 1,
            (Some(_), None) => i += 1,
            (None, Some(_)) => j += 1,
            (None, None) => unreachable!(),
        }
        taken += 1;
    }
    Ok(shared as f64 / taken as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(set: HashSet<&[u8]>) -> Vec<Vec<u8>> {
        let mut v: Vec<Vec<u8>> = set.into_iter().map(<[u8]>::to_vec).collect();
        v.sort();
        v
    }

    fn strings(items: &[&str]) -> Vec<Vec<u8>> {
        let mut v: Vec<Vec<u8>> = items.iter().map(|s| s.as_bytes().to_vec()).collect();
        v.sort();
        v
    }

    #[test]
    fn lz_set_hand_traces() {
        assert_eq!(sorted(lz_set(b"abcabc").unwrap()), strings(&["a", "b", "c", "ab"]));
        assert_eq!(
            sorted(lz_set(b"abcabd").unwrap()),
            strings(&["a", "b", "c", "ab", "d"])
        );
        assert_eq!(sorted(lz_set(b"aaaa").unwrap()), strings(&["a", "aa"]));
        assert!(matches!(lz_set(b""), Err(MetricError::EmptyInput)));
    }

    #[test]
    fn exact_regime_matches_set_jaccard() {
        let a = LzjdSketch::from_data(b"abcabc", 5).unwrap();
        let b = LzjdSketch::from_data(b"abcabd", 5).unwrap();
        assert_eq!(lzjd_similarity(&a, &b).unwrap(), 0.8);
    }

    #[test]
    fn sketch_is_strictly_increasing_and_bounded() {
        let data: Vec<u8> = (0..5000u32).map(|i| (i * 7919 % 251) as u8).collect();
        let s = LzjdSketch::from_data(&data, 64).unwrap();
        assert_eq!(s.min_hashes().len(), 64);
        assert!(s.min_hashes().windows(2).all(|w| w[0] < w[1]));
        let small = LzjdSketch::from_data(b"aaaa", 64).unwrap();
        assert_eq!(small.min_hashes().len(), 2);
    }

    #[test]
    fn mismatched_k_is_an_error() {
        let a = LzjdSketch::from_data(b"abc", 4).unwrap();
        let b = LzjdSketch::from_data(b"abc", 8).unwrap();
        assert!(matches!(
            lzjd_similarity(&a, &b),
            Err(MetricError::MismatchedSketchSize(4, 8))
        ));
    }

    #[test]
    fn text_round_trip() {
        let s = LzjdSketch::from_data(b"the quick brown fox jumps over the lazy dog", 16).unwrap();
        let text = s.to_string();
        assert!(text.starts_with("16:"));
        assert_eq!(text.parse::<LzjdSketch>().unwrap(), s);
        assert!("16:zz".parse::<LzjdSketch>().is_err());
        assert!("0:".parse::<LzjdSketch>().is_err());
    }
}
