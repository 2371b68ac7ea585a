//! Byte-level similarity metrics normalized to `[0, 1]`.
//!
//! Every metric is split into a digest step, run once per input, and a
//! comparison step over two digests. [`Metric`] wraps the four supported
//! metrics behind that two-step interface so callers can score many pairs
//! without re-digesting.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub mod ctph;
pub mod lzjd;
pub mod tlsh;

pub use ctph::{ctph_digest, ctph_similarity, CtphDigest};
pub use lzjd::{lz_set, lzjd_similarity, LzjdSketch};
pub use tlsh::{tlsh_digest, tlsh_distance, tlsh_similarity, TlshDigest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("tlsh not defined: {0}")]
    TlshUndefined(String),
    #[error("sketch size mismatch: {0} vs {1}")]
    MismatchedSketchSize(usize, usize),
    #[error("digest kinds do not match the metric")]
    DigestKind,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown metric `{0}` (valid: ctph, tlsh, lzjd, naive)")]
    UnknownMetric(String),
}

/// A normalized similarity value tagged with the metric that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricScore {
    metric: &'static str,
    value: f64,
}

impl MetricScore {
    pub fn new(metric: &'static str, value: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&value),
            "{metric} produced {value}, outside [0, 1]"
        );
        Self { metric, value }
    }

    pub fn metric(&self) -> &'static str {
        self.metric
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Baseline that always answers 0.5, whatever the inputs.
pub fn naive_similarity(_a: &[u8], _b: &[u8]) -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Ctph,
    Tlsh { max_distance: u32 },
    Lzjd { k: usize },
    Naive,
}

impl Metric {
    pub const NAMES: [&'static str; 4] = ["ctph", "tlsh", "lzjd", "naive"];

    /// All built-in metrics with default parameters.
    pub fn all() -> Vec<Metric> {
        vec![
            Metric::Ctph,
            Metric::Tlsh {
                max_distance: tlsh::DEFAULT_MAX_DISTANCE,
            },
            Metric::Lzjd {
                k: lzjd::DEFAULT_SKETCH_SIZE,
            },
            Metric::Naive,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Ctph => "ctph",
            Metric::Tlsh { .. } => "tlsh",
            Metric::Lzjd { .. } => "lzjd",
            Metric::Naive => "naive",
        }
    }

    pub fn digest(&self, data: &[u8]) -> Result<Digest, MetricError> {
        Ok(match self {
            Metric::Ctph => Digest::Ctph(ctph_digest(data)?),
            Metric::Tlsh { .. } => Digest::Tlsh(tlsh_digest(data)?),
            Metric::Lzjd { k } => Digest::Lzjd(LzjdSketch::from_data(data, *k)?),
            Metric::Naive => Digest::Naive,
        })
    }

    pub fn compare(&self, a: &Digest, b: &Digest) -> Result<MetricScore, MetricError> {
        let value = match (self, a, b) {
            (Metric::Ctph, Digest::Ctph(x), Digest::Ctph(y)) => ctph_similarity(x, y),
            (Metric::Tlsh { max_distance }, Digest::Tlsh(x), Digest::Tlsh(y)) => {
                tlsh_similarity(x, y, *max_distance)
            }
            (Metric::Lzjd { .. }, Digest::Lzjd(x), Digest::Lzjd(y)) => lzjd_similarity(x, y)?,
            (Metric::Naive, Digest::Naive, Digest::Naive) => 0.5,
            _ => return Err(MetricError::DigestKind),
        };
        Ok(MetricScore::new(self.name(), value))
    }

    /// Digests both inputs and compares them.
    pub fn similarity(&self, a: &[u8], b: &[u8]) -> Result<MetricScore, MetricError> {
        if let Metric::Naive = self {
            return Ok(MetricScore::new("naive", naive_similarity(a, b)));
        }
        self.compare(&self.digest(a)?, &self.digest(b)?)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MetricError::UnknownMetric(s.to_owned()))
    }
}

/// Precomputed per-input state of a metric.
#[derive(Clone, Debug, PartialEq)]
pub enum Digest {
    Ctph(CtphDigest),
    Tlsh(TlshDigest),
    Lzjd(LzjdSketch),
    Naive,
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Digest::Ctph(d) => d.fmt(f),
            Digest::Tlsh(d) => d.fmt(f),
            Digest::Lzjd(d) => d.fmt(f),
            Digest::Naive => f.write_str("-"),
        }
    }
}
