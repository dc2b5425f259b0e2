use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SplitError;
use crate::model::{Dataset, LabelSet};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub label: String,
    pub requested: usize,
    pub available: usize,
}

/// Keep records whose label is in `labels`; the label set is narrowed,
/// keeping its original order.
pub fn label_filter(dataset: &Dataset, labels: &[String]) -> Result<Dataset, SplitError> {
    if let Some(bad) = labels.iter().find(|l| !dataset.label_set().contains(l)) {
        return Err(SplitError::UnknownLabel(bad.clone()));
    }
    let label_set = dataset
        .label_set()
        .restrict(labels)
        .map_err(|e| SplitError::Spec(e.to_string()))?;
    let records = dataset
        .records()
        .iter()
        .filter(|r| label_set.contains(&r.label))
        .cloned()
        .collect();
    Ok(dataset.derive(label_set, records))
}

/// Keep records whose `field` is one of `values`.
pub fn restrict_field(dataset: &Dataset, field: &str, values: &[String]) -> Dataset {
    let records = dataset
        .records()
        .iter()
        .filter(|r| r.field(field).is_some_and(|v| values.contains(&v)))
        .cloned()
        .collect();
    dataset.derive(dataset.label_set().clone(), records)
}

/// Per-label uniform sample without replacement among records with at
/// least `min_reply_count` replies. Labels with no (or zero) quota are
/// dropped from the output and its label set.
pub fn quota_subsample(
    dataset: &Dataset,
    quotas: &IndexMap<String, usize>,
    min_reply_count: Option<i64>,
    seed: u64,
) -> Result<Dataset, SplitError> {
    if let Some(bad) = quotas.keys().find(|l| !dataset.label_set().contains(l)) {
        return Err(SplitError::UnknownLabel(bad.clone()));
    }
    let eligible = |r: &crate::model::Record| match min_reply_count {
        Some(min) => r.reply_count.is_some_and(|n| n >= min),
        None => true,
    };
    let mut pools: IndexMap<&str, Vec<usize>> = IndexMap::new();
    for (i, r) in dataset.records().iter().enumerate() {
        if eligible(r) {
            pools.entry(r.label.as_str()).or_default().push(i);
        }
    }
    let shortfalls: Vec<Shortfall> = dataset
        .label_set()
        .labels()
        .iter()
        .filter_map(|l| {
            let requested = *quotas.get(l)?;
            let available = pools.get(l.as_str()).map_or(0, Vec::len);
            (requested > available).then(|| Shortfall {
                label: l.clone(),
                requested,
                available,
            })
        })
        .collect();
    if !shortfalls.is_empty() {
        return Err(SplitError::InsufficientRecords(shortfalls));
    }

    let mut rng = seeded(seed);
    let mut keep = Vec::new();
    for label in dataset.label_set().labels() {
        let quota = quotas.get(label).copied().unwrap_or(0);
        if quota == 0 {
            continue;
        }
        let mut pool = pools.get(label.as_str()).cloned().unwrap_or_default();
        pool.shuffle(&mut rng);
        keep.extend_from_slice(&pool[..quota]);
    }
    keep.sort_unstable();
    let kept_labels: Vec<String> = dataset
        .label_set()
        .labels()
        .iter()
        .filter(|l| quotas.get(*l).is_some_and(|&q| q > 0))
        .cloned()
        .collect();
    let label_set = LabelSet::new(kept_labels).map_err(|e| SplitError::Spec(e.to_string()))?;
    let records = keep.iter().map(|&i| dataset.records()[i].clone()).collect();
    Ok(dataset.derive(label_set, records))
}

/// Groups whose records carry two or more distinct labels, sorted.
pub fn find_conflicting_groups(dataset: &Dataset, field: &str) -> Vec<String> {
    let mut labels: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for r in dataset.records() {
        if let Some(g) = r.field(field) {
            labels.entry(g).or_default().insert(&r.label);
        }
    }
    labels
        .into_iter()
        .filter(|(_, l)| l.len() >= 2)
        .map(|(g, _)| g)
        .collect()
}
