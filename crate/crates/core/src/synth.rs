//! Synthetic datasets with known leakage, for tests, benchmarks and demos.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::model::{Dataset, LabelSet, Record};
use crate::rng::{seeded, Rng};
use crate::snowflake::TWITTER;

pub const DAY_MS: i64 = 86_400_000;
/// 2015-01-01T00:00:00Z.
pub const EPOCH_2015_MS: i64 = 1_420_070_400_000;

/// Snowflake id for a posting time, worker and sequence number.
pub fn compose_id(timestamp_ms: i64, worker: u64, sequence: u64) -> String {
    let field = (timestamp_ms - TWITTER.epoch_ms) as u64;
    let id = (field << TWITTER.timestamp_shift())
        | ((worker & 0x3ff) << TWITTER.sequence_bits)
        | (sequence & 0xfff);
    id.to_string()
}

/// Draw a fresh id posted uniformly in `[start_ms, end_ms)`.
pub fn random_id(rng: &mut Rng, start_ms: i64, end_ms: i64, used: &mut HashSet<String>) -> String {
    loop {
        let id = compose_id(
            rng.gen_range(start_ms..end_ms),
            rng.gen_range(0..1024),
            rng.gen_range(0..4096),
        );
        if used.insert(id.clone()) {
            return id;
        }
    }
}

const VOCAB: &[&str] = &[
    "breaking", "news", "police", "report", "says", "video", "people", "city", "after",
    "official", "shooting", "crash", "claims", "photo", "today", "world", "update", "live",
    "confirmed", "statement", "source", "local", "watch", "new", "first", "killed", "hostage",
    "plane", "attack", "school", "election", "president", "health", "virus", "vaccine",
    "study", "doctors", "cure", "celebrity", "wedding", "divorce", "rumor", "fake", "hoax",
    "real", "story", "viral", "share", "retweet", "please", "pray", "media", "reporting",
    "government", "minister", "court", "judge", "fire", "storm", "flood", "earthquake",
    "rescue", "missing", "found", "dead", "alive", "leak", "email", "twitter", "account",
];

/// `n` words drawn from a small fixed vocabulary plus numbered filler.
pub fn random_text(rng: &mut Rng, n: usize) -> String {
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.7) {
                VOCAB.choose(rng).expect("vocab").to_string()
            } else {
                format!("w{}", rng.gen_range(0..50_000))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Layout of the era fixture: every label gets its own posting window.
#[derive(Debug, Clone)]
pub struct EraFixture {
    pub labels: Vec<String>,
    pub per_label: usize,
    pub start_ms: i64,
    pub window_ms: i64,
    /// Empty stretch between consecutive windows.
    pub gap_ms: i64,
}

impl Default for EraFixture {
    /// Four labels of 500 records, 30-day windows 30 days apart, from 2015.
    /// One step of the third id digit is about 2.8 days at this time, so the
    /// windows share no 3-digit prefix.
    fn default() -> Self {
        Self {
            labels: ["true", "false", "unverified", "non-rumor"]
                .map(String::from)
                .to_vec(),
            per_label: 500,
            start_ms: EPOCH_2015_MS,
            window_ms: 30 * DAY_MS,
            gap_ms: 30 * DAY_MS,
        }
    }
}

impl EraFixture {
    pub fn window(&self, label_index: usize) -> (i64, i64) {
        let start = self.start_ms + label_index as i64 * (self.window_ms + self.gap_ms);
        (start, start + self.window_ms)
    }

    /// Whole span covered by the windows.
    pub fn span(&self) -> (i64, i64) {
        (self.window(0).0, self.window(self.labels.len() - 1).1)
    }

    /// Records interleaved by label; ids drawn uniformly in each label's window.
    pub fn generate(&self, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let mut used = HashSet::new();
        let mut recs = Vec::with_capacity(self.per_label * self.labels.len());
        for _ in 0..self.per_label {
            for (li, label) in self.labels.iter().enumerate() {
                let (a, b) = self.window(li);
                let id = random_id(&mut rng, a, b, &mut used);
                recs.push(Record::new(id, random_text(&mut rng, 12), label.clone()));
            }
        }
        let ls = LabelSet::new(self.labels.clone()).expect("distinct labels");
        let mut ds = Dataset::new("era-fixture", ls, recs).expect("valid fixture");
        ds.source_notes = format!("synthetic: labels in disjoint posting windows, seed {seed}");
        ds
    }

    /// Pool of `per_label` records for each label except `anchor`, posted
    /// uniformly over the whole span, with ids disjoint from `avoid`.
    pub fn broad_pool(&self, anchor: &str, per_label: usize, avoid: &Dataset, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let mut used: HashSet<String> = avoid.records().iter().map(|r| r.id.clone()).collect();
        let (a, b) = self.span();
        let mut recs = Vec::new();
        for label in self.labels.iter().filter(|l| *l != anchor) {
            for _ in 0..per_label {
                let id = random_id(&mut rng, a, b, &mut used);
                recs.push(Record::new(id, random_text(&mut rng, 12), label.clone()));
            }
        }
        let ls = LabelSet::new(self.labels.clone()).expect("distinct labels");
        Dataset::new("era-pool", ls, recs).expect("valid pool")
    }
}

/// Same ids and texts, labels shuffled: ids carry no label information.
pub fn permute_labels(dataset: &Dataset, seed: u64) -> Dataset {
    let mut labels: Vec<String> = dataset.records().iter().map(|r| r.label.clone()).collect();
    labels.shuffle(&mut seeded(seed));
    let recs = dataset
        .records()
        .iter()
        .zip(labels)
        .map(|(r, label)| Record { label, ..r.clone() })
        .collect();
    let mut ds = dataset.derive(dataset.label_set().clone(), recs);
    ds.name = format!("{}-permuted", dataset.name);
    ds
}

/// `n` records of random text with snowflake ids over 2015, labels cycling
/// through `labels`. Used for throughput checks.
pub fn random_corpus(n: usize, labels: &[&str], seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let mut used = HashSet::with_capacity(n);
    let recs = (0..n)
        .map(|i| {
            let id = random_id(&mut rng, EPOCH_2015_MS, EPOCH_2015_MS + 365 * DAY_MS, &mut used);
            let len = rng.gen_range(8..20);
            Record::new(id, random_text(&mut rng, len), labels[i % labels.len()])
        })
        .collect();
    Dataset::new_unchecked("random-corpus", LabelSet::new(labels.iter().copied()).expect("labels"), recs)
}
