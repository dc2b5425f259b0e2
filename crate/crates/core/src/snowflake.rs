//! Tweet id decoding.
//!
//! Snowflake ids pack `timestamp | worker | sequence` into 63 bits, with the
//! timestamp counted in milliseconds from a custom epoch. Because the
//! timestamp occupies the high bits, the leading decimal digits of an id
//! are a coarse clock.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{parse_id, Dataset, IdError};

/// Bit layout of a snowflake id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnowflakeConstants {
    pub epoch_ms: i64,
    pub worker_bits: u32,
    pub sequence_bits: u32,
    /// Largest timestamp accepted as real.
    pub max_timestamp_ms: i64,
}

/// Twitter's layout: epoch 2010-11-04T01:42:54.657Z, 10 worker bits, 12
/// sequence bits; anything past 2100-01-01 is treated as garbage.
pub const TWITTER: SnowflakeConstants = SnowflakeConstants {
    epoch_ms: 1_288_834_974_657,
    worker_bits: 10,
    sequence_bits: 12,
    max_timestamp_ms: 4_102_444_800_000,
};

impl SnowflakeConstants {
    pub const fn timestamp_shift(&self) -> u32 {
        self.worker_bits + self.sequence_bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnowflakeError {
    #[error(transparent)]
    Parse(#[from] IdError),
    /// The id predates snowflake allocation (or is garbage): its timestamp
    /// field is zero or decodes outside the sanity window.
    #[error("id {0} is not a snowflake-era id")]
    PreSnowflakeId(String),
    #[error("id {id} has only {digits} digits, fewer than {k}")]
    TooShort { id: String, digits: usize, k: usize },
    #[error("prefix length must be at least 1")]
    ZeroLength,
}

/// Fields of a decoded id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decoded {
    pub timestamp_ms: i64,
    pub worker: u64,
    pub sequence: u64,
}

pub fn decode_with(id: &str, c: &SnowflakeConstants) -> Result<Decoded, SnowflakeError> {
    let value = parse_id(id)?;
    let field = value >> c.timestamp_shift();
    let timestamp_ms = (field as i64).saturating_add(c.epoch_ms);
    if field == 0 || field > i64::MAX as u64 || timestamp_ms > c.max_timestamp_ms {
        return Err(SnowflakeError::PreSnowflakeId(id.to_string()));
    }
    Ok(Decoded {
        timestamp_ms,
        worker: (value >> c.sequence_bits) & ((1 << c.worker_bits) - 1),
        sequence: value & ((1 << c.sequence_bits) - 1),
    })
}

/// Milliseconds since the Unix epoch at which the tweet was posted.
pub fn decode_timestamp(id: &str) -> Result<i64, SnowflakeError> {
    decode_with(id, &TWITTER).map(|d| d.timestamp_ms)
}

/// The leading `k` decimal digits of an id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DigitPrefix(pub Vec<u8>);

impl DigitPrefix {
    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn prefix_digits(id: &str, k: usize) -> Result<DigitPrefix, SnowflakeError> {
    if k == 0 {
        return Err(SnowflakeError::ZeroLength);
    }
    let canonical = parse_id(id)?.to_string();
    if canonical.len() < k {
        return Err(SnowflakeError::TooShort {
            id: id.to_string(),
            digits: canonical.len(),
            k,
        });
    }
    Ok(DigitPrefix(
        canonical.bytes().take(k).map(|b| b - b'0').collect(),
    ))
}

/// Per-label counts of decodable timestamps in fixed-width buckets aligned
/// to the Unix epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestampHistogram {
    pub bucket_ms: i64,
    /// label -> (bucket start -> count); labels in label-set order, buckets ascending.
    pub counts: IndexMap<String, std::collections::BTreeMap<i64, usize>>,
    /// Records whose ids do not decode to a timestamp.
    pub excluded_count: usize,
}

pub fn timestamp_histogram(dataset: &Dataset, bucket_ms: i64) -> TimestampHistogram {
    assert!(bucket_ms > 0, "bucket width must be positive");
    let mut counts: IndexMap<String, std::collections::BTreeMap<i64, usize>> = dataset
        .label_set()
        .labels()
        .iter()
        .map(|l| (l.clone(), Default::default()))
        .collect();
    let mut excluded_count = 0;
    for r in dataset.records() {
        match r.timestamp_ms {
            Some(ts) => {
                let start = ts.div_euclid(bucket_ms) * bucket_ms;
                *counts
                    .entry(r.label.clone())
                    .or_default()
                    .entry(start)
                    .or_default() += 1;
            }
            None => excluded_count += 1,
        }
    }
    TimestampHistogram {
        bucket_ms,
        counts,
        excluded_count,
    }
}

impl TimestampHistogram {
    /// CSV with columns `label,bucket_start_ms,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,bucket_start_ms,count\n");
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for (label, buckets) in &self.counts {
            for (start, n) in buckets {
                w.write_record([label.as_str(), &start.to_string(), &n.to_string()])
                    .expect("in-memory write");
            }
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
        out
    }

    /// Total-variation distance between the normalized histograms of two labels.
    pub fn distance(&self, a: &str, b: &str) -> Option<f64> {
        let ha = self.counts.get(a)?;
        let hb = self.counts.get(b)?;
        let na: usize = ha.values().sum();
        let nb: usize = hb.values().sum();
        if na == 0 || nb == 0 {
            return None;
        }
        // integer numerator so disjoint histograms give exactly 1
        let keys: std::collections::BTreeSet<i64> = ha.keys().chain(hb.keys()).copied().collect();
        let num: u128 = keys
            .iter()
            .map(|k| {
                let ca = *ha.get(k).unwrap_or(&0) as u128 * nb as u128;
                let cb = *hb.get(k).unwrap_or(&0) as u128 * na as u128;
                ca.abs_diff(cb)
            })
            .sum();
        Some(num as f64 / (2 * na as u128 * nb as u128) as f64)
    }
}
