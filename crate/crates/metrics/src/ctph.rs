//! Context-triggered piecewise hashing.
//!
//! A rolling hash over a 7-byte window decides where input is cut into
//! pieces; each piece contributes one base64 character derived from an
//! FNV-style hash of the piece. Two signatures are produced per digest, at
//! `block_size` and `2 * block_size`, so that digests whose block sizes
//! differ by a factor of two remain comparable.
//!
//! ```text
//! 48:gZkDbTqXQx0l0mJxhq2w1uC6b6MW:gZkDbgQ2mXD6b6B
//! \/ \__________________________/ \____________/
//!  |          sig1 (bs)            sig2 (2 * bs)
//!  +-- block size
//! ```

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::MetricError;

pub const ROLLING_WINDOW: usize = 7;
pub const MIN_BLOCK_SIZE: u32 = 3;
pub const SIG1_MAX: usize = 64;
pub const SIG2_MAX: usize = SIG1_MAX / 2;

const HASH_PRIME: u32 = 0x0100_0193;
const HASH_INIT: u32 = 0x2802_1967;

const BASE64: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

#[derive(Clone, Default)]
struct RollingHash {
    window: [u8; ROLLING_WINDOW],
    h1: u32,
    h2: u32,
    h3: u32,
    n: usize,
}

impl RollingHash {
    fn update(&mut self, c: u8) {
        let c32 = u32::from(c);
        self.h2 = self.h2.wrapping_sub(self.h1);
        self.h2 = self.h2.wrapping_add(ROLLING_WINDOW as u32 * c32);
        self.h1 = self.h1.wrapping_add(c32);
        self.h1 = self
            .h1
            .wrapping_sub(u32::from(self.window[self.n % ROLLING_WINDOW]));
        self.window[self.n % ROLLING_WINDOW] = c;
        self.n += 1;
        self.h3 = (self.h3 << 5) ^ c32;
    }

    fn sum(&self) -> u32 {
        self.h1.wrapping_add(self.h2).wrapping_add(self.h3)
    }
}

#[inline]
fn piece_hash(c: u8, h: u32) -> u32 {
    h.wrapping_mul(HASH_PRIME) ^ u32::from(c)
}

/// A CTPH digest, serialized as `block_size:sig1:sig2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CtphDigest {
    block_size: u32,
    sig1: String,
    sig2: String,
}

impl CtphDigest {
    pub fn block_size(&self) -> u32 {
        self.block_size
    }

    pub fn sig1(&self) -> &str {
        &self.sig1
    }

    pub fn sig2(&self) -> &str {
        &self.sig2
    }
}

impl fmt::Display for CtphDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.block_size, self.sig1, self.sig2)
    }
}

impl FromStr for CtphDigest {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricError::Parse(format!("malformed ctph digest `{s}`"));
        let mut parts = s.splitn(3, ':');
        let block_size: u32 = parts
            .next()
            .and_then(|b| b.parse().ok())
            .ok_or_else(bad)?;
        let sig1 = parts.next().ok_or_else(bad)?;
        let sig2 = parts.next().ok_or_else(bad)?;
        let valid_bs = block_size >= MIN_BLOCK_SIZE
            && block_size % MIN_BLOCK_SIZE == 0
            && (block_size / MIN_BLOCK_SIZE).is_power_of_two();
        let in_alphabet = |sig: &str| sig.bytes().all(|b| BASE64.contains(&b));
        if !valid_bs
            || sig1.len() > SIG1_MAX
            || sig2.len() > SIG2_MAX
            || !in_alphabet(sig1)
            || !in_alphabet(sig2)
        {
            return Err(bad());
        }
        Ok(Self {
            block_size,
            sig1: sig1.to_owned(),
            sig2: sig2.to_owned(),
        })
    }
}

fn digest_at(data: &[u8], block_size: u32) -> (String, String) {
    let mut roll = RollingHash::default();
    let mut h1 = HASH_INIT;
    let mut h2 = HASH_INIT;
    let mut sig1 = Vec::with_capacity(SIG1_MAX);
    let mut sig2 = Vec::with_capacity(SIG2_MAX);
    let bs = block_size;
    let bs2 = block_size * 2;

    for &c in data {
        roll.update(c);
        h1 = piece_hash(c, h1);
        h2 = piece_hash(c, h2);
        let r = roll.sum();
        // The final character of a full signature absorbs the remaining input.
        if r % bs == bs - 1 && sig1.len() < SIG1_MAX - 1 {
            sig1.push(BASE64[(h1 % 64) as usize]);
            h1 = HASH_INIT;
        }
        if r % bs2 == bs2 - 1 && sig2.len() < SIG2_MAX - 1 {
            sig2.push(BASE64[(h2 % 64) as usize]);
            h2 = HASH_INIT;
        }
    }
    if roll.sum() != 0 {
        sig1.push(BASE64[(h1 % 64) as usize]);
        sig2.push(BASE64[(h2 % 64) as usize]);
    }
    // Alphabet is ASCII.
    (
        String::from_utf8(sig1).expect("ascii"),
        String::from_utf8(sig2).expect("ascii"),
    )
}

/// Computes the CTPH digest of `data`.
///
/// The block size starts at the smallest power-of-two multiple of 3 whose
/// 64 pieces cover the input, and halves while the first signature comes out
/// shorter than half its capacity.
pub fn ctph_digest(data: &[u8]) -> Result<CtphDigest, MetricError> {
    if data.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut block_size = MIN_BLOCK_SIZE;
    while (block_size as usize) * SIG1_MAX < data.len() {
        block_size *= 2;
    }
    loop {
        let (sig1, sig2) = digest_at(data, block_size);
        if block_size > MIN_BLOCK_SIZE && sig1.len() < SIG1_MAX / 2 {
            block_size /= 2;
            continue;
        }
        return Ok(CtphDigest {
            block_size,
            sig1,
            sig2,
        });
    }
}

/// Collapses runs of more than three identical characters to three.
fn eliminate_sequences(s: &str) -> Vec<u8> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    for (i, &b) in bytes.iter().enumerate() {
        if i < 3 || !(b == bytes[i - 1] && b == bytes[i - 2] && b == bytes[i - 3]) {
            out.push(b);
        }
    }
    out
}

fn has_common_substring(a: &[u8], b: &[u8]) -> bool {
    if a.len() < ROLLING_WINDOW || b.len() < ROLLING_WINDOW {
        return false;
    }
    let windows: HashSet<&[u8]> = a.windows(ROLLING_WINDOW).collect();
    b.windows(ROLLING_WINDOW).any(|w| windows.contains(w))
}

/// Weighted edit distance: insertion and deletion cost 1, substitution 2.
pub(crate) fn edit_distance(a: &[u8], b: &[u8]) -> u32 {
    let mut prev: Vec<u32> = (0..=b.len() as u32).collect();
    let mut cur = vec![0u32; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i as u32 + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + if ca == cb { 0 } else { 2 };
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Score in 0..=100 for two signatures produced at `block_size`.
fn score_strings(a: &[u8], b: &[u8], block_size: u32) -> u32 {
    if a.len() > SIG1_MAX || b.len() > SIG1_MAX || !has_common_substring(a, b) {
        return 0;
    }
    let total = (a.len() + b.len()) as u32;
    let mut score = edit_distance(a, b) * SIG1_MAX as u32 / total;
    score = 100 * score / SIG1_MAX as u32;
    if score >= 100 {
        return 0;
    }
    score = 100 - score;
    // Small block sizes cannot claim a match larger than the evidence supports.
    let uncapped_from = (99 + ROLLING_WINDOW as u32) / ROLLING_WINDOW as u32 * MIN_BLOCK_SIZE;
    if block_size >= uncapped_from {
        return score;
    }
    let cap = block_size / MIN_BLOCK_SIZE * a.len().min(b.len()) as u32;
    score.min(cap)
}

/// Integer CTPH match score in `0..=100`.
pub fn ctph_score(a: &CtphDigest, b: &CtphDigest) -> u32 {
    let (bs_a, bs_b) = (a.block_size, b.block_size);
    if bs_a != bs_b && bs_a != bs_b * 2 && bs_b != bs_a * 2 {
        return 0;
    }
    let a1 = eliminate_sequences(&a.sig1);
    let a2 = eliminate_sequences(&a.sig2);
    let b1 = eliminate_sequences(&b.sig1);
    let b2 = eliminate_sequences(&b.sig2);

    if bs_a == bs_b && a1 == b1 && a2 == b2 {
        return 100;
    }
    if bs_a == bs_b {
        score_strings(&a1, &b1, bs_a).max(score_strings(&a2, &b2, bs_a * 2))
    } else if bs_a == bs_b * 2 {
        score_strings(&a1, &b2, bs_a)
    } else {
        score_strings(&a2, &b1, bs_b)
    }
}

/// CTPH similarity scaled into `[0, 1]`.
pub fn ctph_similarity(a: &CtphDigest, b: &CtphDigest) -> f64 {
    f64::from(ctph_score(a, b)) / 100.0
}
