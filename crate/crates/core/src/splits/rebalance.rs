//! Time rebalancing: swap non-anchor records for pool records posted at
//! about the same time as the anchor class, so posting time (and with it
//! the id digits) stops separating the labels.

use std::collections::{BTreeSet, HashMap, HashSet};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{random_split, SplitSpec};
use crate::forest::ForestConfig;
use crate::idleak::{run_id_leak_test, IdLeakReport, Verdict};
use crate::model::{Dataset, Record};
use crate::rng::{derive_seed, seeded};
use crate::snowflake::timestamp_histogram;

pub const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Error)]
pub enum RebalanceError {
    #[error("replacement pool has no usable records")]
    EmptyPool,
    #[error("no {0:?} records with a decodable timestamp")]
    NoAnchorRecords(String),
    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("window must be non-negative, got {0}")]
    NegativeWindow(i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceOptions {
    pub anchor_label: String,
    pub window_ms: i64,
    pub seed: u64,
    /// Digit count of the before/after id-leak check.
    pub k: usize,
    pub forest: ForestConfig,
    /// Ratios of the split used for the before/after leak check.
    pub leak_ratios: [f64; 3],
    /// Histogram bucket width for the timestamp distances.
    pub bucket_ms: i64,
    /// Skip the before/after leak check (it trains two forests).
    pub measure_leakage: bool,
}

impl RebalanceOptions {
    pub fn new(anchor_label: impl Into<String>, seed: u64) -> Self {
        Self {
            anchor_label: anchor_label.into(),
            window_ms: 7 * DAY_MS,
            seed,
            k: 3,
            forest: ForestConfig::default(),
            leak_ratios: [0.7, 0.1, 0.2],
            bucket_ms: DAY_MS,
            measure_leakage: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub original_id: String,
    pub replacement_id: String,
    pub label: String,
    pub target_ms: i64,
    pub delta_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakSnapshot {
    pub k: usize,
    pub macro_f1: f64,
    pub baseline_macro_f1: f64,
    pub leakage_score: f64,
    pub verdict: Verdict,
}

impl From<&IdLeakReport> for LeakSnapshot {
    fn from(r: &IdLeakReport) -> Self {
        Self {
            k: r.k,
            macro_f1: r.macro_f1,
            baseline_macro_f1: r.baseline_macro_f1,
            leakage_score: r.leakage_score,
            verdict: r.verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceReport {
    pub toolkit_version: String,
    pub options: RebalanceOptions,
    pub n_replaced: usize,
    /// Records kept as they were because no pool record was close enough.
    pub rejected_ids: Vec<String>,
    /// Pool records ignored: id already in the dataset, label not being
    /// replaced, or no decodable timestamp.
    pub pool_skipped: usize,
    pub max_delta_ms: Option<i64>,
    pub mean_delta_ms: Option<f64>,
    pub replacements: Vec<Replacement>,
    pub leak_before: Option<LeakSnapshot>,
    pub leak_after: Option<LeakSnapshot>,
    /// Total-variation distance between the anchor's day histogram and each
    /// other label's.
    pub hist_distance_before: IndexMap<String, f64>,
    pub hist_distance_after: IndexMap<String, f64>,
}

fn leak_snapshot(ds: &Dataset, opts: &RebalanceOptions) -> Option<LeakSnapshot> {
    let spec = SplitSpec::with_ratios(opts.leak_ratios, derive_seed(opts.seed, 1));
    let split = random_split(ds, &spec).ok()?;
    run_id_leak_test(ds, &split, opts.k, &opts.forest)
        .ok()
        .map(|r| LeakSnapshot::from(&r))
}

fn hist_distances(ds: &Dataset, anchor: &str, bucket_ms: i64) -> IndexMap<String, f64> {
    let h = timestamp_histogram(ds, bucket_ms);
    ds.label_set()
        .labels()
        .iter()
        .filter(|l| *l != anchor)
        .filter_map(|l| Some((l.clone(), h.distance(anchor, l)?)))
        .collect()
}

/// Nearest entry to `target`; on equal distance the earlier timestamp wins.
fn nearest(set: &BTreeSet<(i64, usize)>, target: i64) -> Option<(i64, usize)> {
    let below = set.range(..(target, usize::MAX)).next_back().copied();
    let above = set.range((target, usize::MAX)..).next().copied();
    match (below, above) {
        (Some(b), Some(a)) => Some(if target - b.0 <= a.0 - target { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Keep every anchor-label record; replace each other record with the
/// unused pool record of the same label closest in time to a seeded draw of
/// anchor timestamps. Draws cycle through a fresh shuffle of the anchor
/// timestamps per label, so a label with as many records as the anchor
/// receives each anchor timestamp once.
pub fn time_rebalance(
    dataset: &Dataset,
    pool: &Dataset,
    opts: &RebalanceOptions,
) -> Result<(Dataset, RebalanceReport), RebalanceError> {
    let anchor = opts.anchor_label.as_str();
    if !dataset.label_set().contains(anchor) {
        return Err(RebalanceError::UnknownLabel(anchor.to_string()));
    }
    if opts.window_ms < 0 {
        return Err(RebalanceError::NegativeWindow(opts.window_ms));
    }
    let anchor_ts: Vec<i64> = dataset
        .records()
        .iter()
        .filter(|r| r.label == anchor)
        .filter_map(|r| r.timestamp_ms)
        .collect();
    if anchor_ts.is_empty() {
        return Err(RebalanceError::NoAnchorRecords(anchor.to_string()));
    }

    let taken: HashSet<&str> = dataset.records().iter().map(|r| r.id.as_str()).collect();
    let mut available: HashMap<&str, BTreeSet<(i64, usize)>> = HashMap::new();
    let mut pool_skipped = 0;
    for (i, r) in pool.records().iter().enumerate() {
        let usable = r.label != anchor
            && dataset.label_set().contains(&r.label)
            && !taken.contains(r.id.as_str());
        match (usable, r.timestamp_ms) {
            (true, Some(ts)) => {
                available.entry(r.label.as_str()).or_default().insert((ts, i));
            }
            _ => pool_skipped += 1,
        }
    }
    if available.is_empty() {
        return Err(RebalanceError::EmptyPool);
    }

    let mut draws: HashMap<String, (Vec<i64>, usize, crate::rng::Rng)> = HashMap::new();
    let mut records: Vec<Record> = Vec::with_capacity(dataset.len());
    let mut replacements = Vec::new();
    let mut rejected_ids = Vec::new();
    for r in dataset.records() {
        if r.label == anchor {
            records.push(r.clone());
            continue;
        }
        let label_index = dataset.label_set().index_of(&r.label).unwrap_or(usize::MAX);
        let (order, next, rng) = draws.entry(r.label.clone()).or_insert_with(|| {
            let rng = seeded(derive_seed(opts.seed, label_index as u64 + 2));
            (anchor_ts.clone(), anchor_ts.len(), rng)
        });
        if *next == order.len() {
            order.shuffle(rng);
            *next = 0;
        }
        let target = order[*next];
        *next += 1;

        let hit = available
            .get_mut(r.label.as_str())
            .and_then(|set| nearest(set, target).map(|h| (set, h)))
            .filter(|(_, (ts, _))| (ts - target).abs() <= opts.window_ms);
        match hit {
            Some((set, (ts, i))) => {
                set.remove(&(ts, i));
                let p = &pool.records()[i];
                replacements.push(Replacement {
                    original_id: r.id.clone(),
                    replacement_id: p.id.clone(),
                    label: r.label.clone(),
                    target_ms: target,
                    delta_ms: ts - target,
                });
                records.push(p.clone());
            }
            None => {
                rejected_ids.push(r.id.clone());
                records.push(r.clone());
            }
        }
    }

    let out = dataset.derive(dataset.label_set().clone(), records);
    let deltas: Vec<i64> = replacements.iter().map(|x| x.delta_ms.abs()).collect();
    let (leak_before, leak_after) = if opts.measure_leakage {
        (leak_snapshot(dataset, opts), leak_snapshot(&out, opts))
    } else {
        (None, None)
    };
    let report = RebalanceReport {
        toolkit_version: crate::VERSION.to_string(),
        options: opts.clone(),
        n_replaced: replacements.len(),
        rejected_ids,
        pool_skipped,
        max_delta_ms: deltas.iter().copied().max(),
        mean_delta_ms: (!deltas.is_empty())
            .then(|| deltas.iter().sum::<i64>() as f64 / deltas.len() as f64),
        replacements,
        leak_before,
        leak_after,
        hist_distance_before: hist_distances(dataset, anchor, opts.bucket_ms),
        hist_distance_after: hist_distances(&out, anchor, opts.bucket_ms),
    };
    Ok((out, report))
}
