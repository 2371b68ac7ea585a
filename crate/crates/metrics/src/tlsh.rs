//! TLSH-style locality-sensitive hash.
//!
//! A 5-byte window slides over the input. At each position six byte
//! triplets (each anchored on the newest byte) are Pearson-hashed into 256
//! buckets, of which the first 128 form the digest body. Bucket counts are
//! quantized into 2-bit digits by their quartiles.

use std::fmt;
use std::str::FromStr;

use crate::MetricError;

pub const WINDOW: usize = 5;
pub const BUCKETS: usize = 128;
pub const MIN_INPUT_LEN: usize = 50;
pub const BODY_LEN: usize = BUCKETS / 4;
/// Length of the hexadecimal text form.
pub const HEX_LEN: usize = 2 * (3 + BODY_LEN);
/// Default distance treated as "no similarity" when normalizing.
pub const DEFAULT_MAX_DISTANCE: u32 = 300;

const SALTS: [u8; 6] = [2, 3, 5, 7, 11, 13];

const PEARSON: [u8; 256] = [
    0x01, 0x57, 0x31, 0x0c, 0xb0, 0xb2, 0x66, 0xa6, 0x79, 0xc1, 0x06, 0x54, 0xf9, 0xe6, 0x2c, 0xa3,
    0x0e, 0xc5, 0xd5, 0xb5, 0xa1, 0x55, 0xda, 0x50, 0x40, 0xef, 0x18, 0xe2, 0xec, 0x8e, 0x26, 0xc8,
    0x6e, 0xb1, 0x68, 0x67, 0x8d, 0xfd, 0xff, 0x32, 0x4d, 0x65, 0x51, 0x12, 0x2d, 0x60, 0x1f, 0xde,
    0x19, 0x6b, 0xbe, 0x46, 0x56, 0xed, 0xf0, 0x22, 0x48, 0xf2, 0x14, 0xd6, 0xf4, 0xe3, 0x95, 0xeb,
    0x61, 0xea, 0x39, 0x16, 0x3c, 0xfa, 0x52, 0xaf, 0xd0, 0x05, 0x7f, 0xc7, 0x6f, 0x3e, 0x87, 0xf8,
    0xae, 0xa9, 0xd3, 0x3a, 0x42, 0x9a, 0x6a, 0xc3, 0xf5, 0xab, 0x11, 0xbb, 0xb6, 0xb3, 0x00, 0xf3,
    0x84, 0x38, 0x94, 0x4b, 0x80, 0x85, 0x9e, 0x64, 0x82, 0x7e, 0x5b, 0x0d, 0x99, 0xf6, 0xd8, 0xdb,
    0x77, 0x44, 0xdf, 0x4e, 0x53, 0x58, 0xc9, 0x63, 0x7a, 0x0b, 0x5c, 0x20, 0x88, 0x72, 0x34, 0x0a,
    0x8a, 0x1e, 0x30, 0xb7, 0x9c, 0x23, 0x3d, 0x1a, 0x8f, 0x4a, 0xfb, 0x5e, 0x81, 0xa2, 0x3f, 0x98,
    0xaa, 0x07, 0x73, 0xa7, 0xf1, 0xce, 0x03, 0x96, 0x37, 0x3b, 0x97, 0xdc, 0x5a, 0x35, 0x17, 0x83,
    0x7d, 0xad, 0x0f, 0xee, 0x4f, 0x5f, 0x59, 0x10, 0x69, 0x89, 0xe1, 0xe0, 0xd9, 0xa0, 0x25, 0x7b,
    0x76, 0x49, 0x02, 0x9d, 0x2e, 0x74, 0x09, 0x91, 0x86, 0xe4, 0xcf, 0xd4, 0xca, 0xd7, 0x45, 0xe5,
    0x1b, 0xbc, 0x43, 0x7c, 0xa8, 0xfc, 0x2a, 0x04, 0x1d, 0x6c, 0x15, 0xf7, 0x13, 0xcd, 0x27, 0xcb,
    0xe9, 0x28, 0xba, 0x93, 0xc6, 0xc0, 0x9b, 0x21, 0xa4, 0xbf, 0x62, 0xcc, 0xa5, 0xb4, 0x75, 0x4c,
    0x8c, 0x24, 0xd2, 0xac, 0x29, 0x36, 0x9f, 0x08, 0xb9, 0xe8, 0x71, 0xc4, 0xe7, 0x2f, 0x92, 0x78,
    0x33, 0x41, 0x1c, 0x90, 0xfe, 0xdd, 0x5d, 0xbd, 0xc2, 0x8b, 0x70, 0x2b, 0x47, 0x6d, 0xb8, 0xd1,
];

#[inline]
fn pearson(salt: u8, a: u8, b: u8, c: u8) -> u8 {
    let mut h = PEARSON[salt as usize];
    h = PEARSON[(h ^ a) as usize];
    h = PEARSON[(h ^ b) as usize];
    PEARSON[(h ^ c) as usize]
}

/// Log-scale length bucket, wrapping at 256.
fn log_length(len: usize) -> u8 {
    let l = len as f64;
    let v = if len <= 656 {
        (l.ln() / 1.5f64.ln()).floor()
    } else if len <= 3199 {
        (l.ln() / 1.3f64.ln() - 8.72777).floor()
    } else {
        (l.ln() / 1.1f64.ln() - 62.5472).floor()
    };
    (v as u64 % 256) as u8
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TlshDigest {
    checksum: u8,
    log_length: u8,
    q1_ratio: u8,
    q2_ratio: u8,
    body: [u8; BODY_LEN],
}

impl TlshDigest {
    pub fn checksum(&self) -> u8 {
        self.checksum
    }

    pub fn log_length(&self) -> u8 {
        self.log_length
    }

    pub fn q1_ratio(&self) -> u8 {
        self.q1_ratio
    }

    pub fn q2_ratio(&self) -> u8 {
        self.q2_ratio
    }

    /// The 2-bit digit of bucket `i`.
    pub fn digit(&self, i: usize) -> u8 {
        (self.body[i / 4] >> (2 * (i % 4))) & 0b11
    }

    pub fn digits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..BUCKETS).map(|i| self.digit(i))
    }
}

impl fmt::Display for TlshDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02X}{:02X}{:X}{:X}",
            self.checksum, self.log_length, self.q1_ratio, self.q2_ratio
        )?;
        for b in &self.body {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

impl FromStr for TlshDigest {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != HEX_LEN {
            return Err(MetricError::Parse(format!(
                "tlsh digest must be {HEX_LEN} hex characters, got {}",
                s.len()
            )));
        }
        let raw = hex::decode(s).map_err(|e| MetricError::Parse(format!("tlsh digest: {e}")))?;
        let mut body = [0u8; BODY_LEN];
        body.copy_from_slice(&raw[3..]);
        Ok(Self {
            checksum: raw[0],
            log_length: raw[1],
            q1_ratio: raw[2] >> 4,
            q2_ratio: raw[2] & 0x0f,
            body,
        })
    }
}

/// Computes the digest of `data`.
pub fn tlsh_digest(data: &[u8]) -> Result<TlshDigest, MetricError> {
    if data.len() < MIN_INPUT_LEN {
        return Err(MetricError::TlshUndefined(format!(
            "input of {} bytes is below the {MIN_INPUT_LEN}-byte minimum",
            data.len()
        )));
    }

    let mut counts = [0u32; 256];
    let mut checksum = 0u8;
    for i in (WINDOW - 1)..data.len() {
        let w = [data[i], data[i - 1], data[i - 2], data[i - 3], data[i - 4]];
        checksum = pearson(0, w[0], w[1], checksum);
        let triplets = [
            (w[1], w[2]),
            (w[1], w[3]),
            (w[2], w[3]),
            (w[2], w[4]),
            (w[1], w[4]),
            (w[3], w[4]),
        ];
        for (&salt, (b, c)) in SALTS.iter().zip(triplets) {
            counts[pearson(salt, w[0], b, c) as usize] += 1;
        }
    }

    let buckets = &counts[..BUCKETS];
    let mut sorted = buckets.to_vec();
    sorted.sort_unstable();
    let q1 = sorted[BUCKETS / 4 - 1];
    let q2 = sorted[BUCKETS / 2 - 1];
    let q3 = sorted[3 * BUCKETS / 4 - 1];
    if q3 == 0 {
        return Err(MetricError::TlshUndefined(
            "input lacks the byte diversity to populate bucket quartiles".into(),
        ));
    }

    let mut body = [0u8; BODY_LEN];
    for (i, &count) in buckets.iter().enumerate() {
        let digit = if count <= q1 {
            0
        } else if count <= q2 {
            1
        } else if count <= q3 {
            2
        } else {
            3
        };
        body[i / 4] |= digit << (2 * (i % 4));
    }

    let ratio = |q: u32| ((u64::from(q) * 100 / u64::from(q3)) % 16) as u8;
    Ok(TlshDigest {
        checksum,
        log_length: log_length(data.len()),
        q1_ratio: ratio(q1),
        q2_ratio: ratio(q2),
        body,
    })
}

fn mod_diff(a: u32, b: u32, modulus: u32) -> u32 {
    let d = a.abs_diff(b);
    d.min(modulus - d)
}

/// Unbounded distance; zero for identical digests.
pub fn tlsh_distance(a: &TlshDigest, b: &TlshDigest) -> u32 {
    let mut diff = 0;
    if a.checksum != b.checksum {
        diff += 1;
    }

    let ldiff = mod_diff(a.log_length.into(), b.log_length.into(), 256);
    diff += if ldiff <= 1 { ldiff } else { ldiff * 12 };

    for (qa, qb) in [(a.q1_ratio, b.q1_ratio), (a.q2_ratio, b.q2_ratio)] {
        let q = mod_diff(qa.into(), qb.into(), 16);
        diff += if q <= 1 { q } else { (q - 1) * 12 };
    }

    for (da, db) in a.digits().zip(b.digits()) {
        diff += match da.abs_diff(db) {
            3 => 6,
            d => u32::from(d),
        };
    }
    diff
}

/// Linear normalization: `clamp(1 - distance / max_distance, 0, 1)`.
pub fn tlsh_similarity(a: &TlshDigest, b: &TlshDigest, max_distance: u32) -> f64 {
    let max = f64::from(max_distance.max(1));
    (1.0 - f64::from(tlsh_distance(a, b)) / max).clamp(0.0, 1.0)
}
