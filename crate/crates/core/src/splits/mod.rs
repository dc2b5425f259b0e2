//! Benchmark splits: generation, export/import, presets, and time
//! rebalancing.
//!
//! Every operation is a deterministic function of its inputs and the seed.
//! Partition sizes use largest-remainder rounding, so each partition (per
//! label, when stratified) is within one record of its exact share.

mod filter;
mod io;
pub mod presets;
mod rebalance;

pub use filter::{find_conflicting_groups, label_filter, quota_subsample, restrict_field, Shortfall};
pub use io::{export_split, import_id_lists, import_split, split_to_json, ImportedSplit};
pub use presets::Preset;
pub use rebalance::{
    time_rebalance, LeakSnapshot, RebalanceError, RebalanceOptions, RebalanceReport, Replacement,
    DAY_MS,
};

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Dataset;
use crate::rng::{seeded, Rng};

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid ratios: {0}")]
    Ratio(String),
    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("no record has field {0:?}")]
    MissingGroupField(String),
    #[error("no record has {field} = {value:?}")]
    UnknownEvent { field: String, value: String },
    #[error("not enough eligible records: {}", fmt_shortfalls(.0))]
    InsufficientRecords(Vec<Shortfall>),
    #[error("invalid split spec: {0}")]
    Spec(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed split file {path}: {message}")]
    Malformed { path: String, message: String },
}

fn fmt_shortfalls(s: &[Shortfall]) -> String {
    s.iter()
        .map(|s| format!("{} needs {} but has {}", s.label, s.requested, s.available))
        .collect::<Vec<_>>()
        .join("; ")
}

/// `field == value` selects the held-out test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holdout {
    pub field: String,
    pub value: String,
}

/// Full description of how a split is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// (train, dev, test) shares summing to 1. With a holdout, only the
    /// train/dev shares matter and are applied to the non-held-out records.
    pub ratios: [f64; 3],
    pub seed: u64,
    pub stratify: bool,
    pub group_by: Option<String>,
    pub holdout: Option<Holdout>,
    /// Keep only these labels (label set narrowed accordingly).
    pub label_filter: Option<Vec<String>>,
    /// Keep only records whose `event` is one of these.
    pub events: Option<Vec<String>>,
    /// Per-label sample sizes drawn before partitioning.
    pub quotas: Option<IndexMap<String, usize>>,
    pub min_reply_count: Option<i64>,
    /// Drop groups (by `group_by`) whose records disagree on the label.
    pub exclude_conflicting_groups: bool,
    /// Take the partition from this field (`train`/`dev`/`test`) instead of
    /// generating one.
    pub partition_field: Option<String>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.7, 0.1, 0.2],
            seed: 0,
            stratify: true,
            group_by: None,
            holdout: None,
            label_filter: None,
            events: None,
            quotas: None,
            min_reply_count: None,
            exclude_conflicting_groups: false,
            partition_field: None,
        }
    }
}

impl SplitSpec {
    pub fn with_ratios(ratios: [f64; 3], seed: u64) -> Self {
        Self {
            ratios,
            seed,
            ..Self::default()
        }
    }

    pub fn check_ratios(&self) -> Result<(), SplitError> {
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(SplitError::Ratio(format!(
                "{:?} has a negative or non-finite share",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SplitError::Ratio(format!(
                "{:?} sums to {sum}, not 1",
                self.ratios
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub toolkit_version: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

/// Disjoint train/dev/test id lists, each in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    #[serde(default)]
    pub spec: SplitSpec,
    pub provenance: Provenance,
    /// Warnings and exclusion counts recorded while building the split.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" | "training" => Some(Partition::Train),
            "dev" | "valid" | "validation" | "val" => Some(Partition::Dev),
            "test" | "testing" => Some(Partition::Test),
            _ => None,
        }
    }
}

impl Split {
    fn from_assignment(
        dataset: &Dataset,
        assignment: &[Option<Partition>],
        spec: SplitSpec,
        notes: Vec<String>,
    ) -> Self {
        let mut parts: [Vec<String>; 3] = Default::default();
        for (r, a) in dataset.records().iter().zip(assignment) {
            if let Some(p) = a {
                parts[*p as usize].push(r.id.clone());
            }
        }
        let [train, dev, test] = parts;
        Split {
            train,
            dev,
            test,
            spec,
            provenance: Provenance {
                toolkit_version: crate::VERSION.to_string(),
                dataset: dataset.name.clone(),
                preset: None,
            },
            notes,
        }
    }

    pub fn part(&self, p: Partition) -> &[String] {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// id -> partition.
    pub fn assignment(&self) -> HashMap<&str, Partition> {
        Partition::ALL
            .iter()
            .flat_map(|&p| self.part(p).iter().map(move |id| (id.as_str(), p)))
            .collect()
    }

    /// Per-partition label counts over the ids present in `dataset`.
    pub fn label_counts(&self, dataset: &Dataset) -> [IndexMap<String, usize>; 3] {
        let index = dataset.id_index();
        Partition::ALL.map(|p| {
            let mut counts: IndexMap<String, usize> = dataset
                .label_set()
                .labels()
                .iter()
                .map(|l| (l.clone(), 0))
                .collect();
            for id in self.part(p) {
                if let Some(&i) = index.get(id.as_str()) {
                    *counts.entry(dataset.records()[i].label.clone()).or_default() += 1;
                }
            }
            counts
        })
    }

    /// Invariant violations against `dataset`: overlap between partitions,
    /// ids absent from the dataset, groups spanning partitions, and a test
    /// set that is not exactly the holdout group.
    pub fn check(&self, dataset: &Dataset) -> Vec<String> {
        let mut problems = Vec::new();
        let index = dataset.id_index();
        let mut seen = HashSet::new();
        for p in Partition::ALL {
            for id in self.part(p) {
                if !seen.insert(id.as_str()) {
                    problems.push(format!("id {id} appears in more than one partition"));
                }
                if !index.contains_key(id.as_str()) {
                    problems.push(format!("id {id} is not in the dataset"));
                }
            }
        }
        let assignment = self.assignment();
        if let Some(field) = &self.spec.group_by {
            let mut home: HashMap<String, Partition> = HashMap::new();
            for r in dataset.records() {
                let (Some(g), Some(&p)) = (r.field(field), assignment.get(r.id.as_str())) else {
                    continue;
                };
                if *home.entry(g.clone()).or_insert(p) != p {
                    problems.push(format!("group {g} spans partitions"));
                }
            }
        }
        if let Some(h) = &self.spec.holdout {
            for r in dataset.records() {
                let Some(&p) = assignment.get(r.id.as_str()) else {
                    continue;
                };
                let held = r.field(&h.field).as_deref() == Some(h.value.as_str());
                if held != (p == Partition::Test) {
                    problems.push(format!("record {} breaks the holdout", r.id));
                }
            }
        }
        problems.sort();
        problems.dedup();
        problems
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`; leftover
/// items go to the largest fractional parts, earlier partitions first on ties.
pub fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for i in 0..3 {
        sizes[i] = exact[i].floor() as usize;
    }
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..3).filter(|&i| ratios[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

fn deal(indices: &[usize], sizes: [usize; 3], assignment: &mut [Option<Partition>]) {
    let mut it = indices.iter();
    for (p, n) in Partition::ALL.iter().zip(sizes) {
        for &i in it.by_ref().take(n) {
            assignment[i] = Some(*p);
        }
    }
}

/// Shuffle `members` and deal them out by `ratios`, per label when stratifying.
fn partition_records(
    dataset: &Dataset,
    members: &[usize],
    ratios: &[f64; 3],
    stratify: bool,
    rng: &mut Rng,
    assignment: &mut [Option<Partition>],
) {
    if stratify {
        let labels = dataset.label_indices();
        let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.label_set().len() + 1];
        for &i in members {
            by_label[labels[i].unwrap_or(dataset.label_set().len())].push(i);
        }
        for mut group in by_label {
            group.shuffle(rng);
            deal(&group, largest_remainder(group.len(), ratios), assignment);
        }
    } else {
        let mut all = members.to_vec();
        all.shuffle(rng);
        deal(&all, largest_remainder(all.len(), ratios), assignment);
    }
}

/// Seeded shuffle-and-cut, stratified by label when `spec.stratify` is set.
pub fn random_split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split, SplitError> {
    if spec.group_by.is_some() || spec.holdout.is_some() {
        return Err(SplitError::Spec(
            "random_split does not take group_by or holdout".into(),
        ));
    }
    spec.check_ratios()?;
    if dataset.is_empty() {
        return Err(SplitError::EmptyDataset);
    }
    let mut rng = seeded(spec.seed);
    let members: Vec<usize> = (0..dataset.len()).collect();
    let mut assignment = vec![None; dataset.len()];
    partition_records(
        dataset,
        &members,
        &spec.ratios,
        spec.stratify,
        &mut rng,
        &mut assignment,
    );
    Ok(Split::from_assignment(dataset, &assignment, spec.clone(), Vec::new()))
}

/// Partition whole groups (e.g. articles) so no group spans two partitions.
/// Records lacking the group field are left out and counted in the notes.
pub fn group_split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split, SplitError> {
    let field = spec
        .group_by
        .as_deref()
        .ok_or_else(|| SplitError::Spec("group_split needs group_by".into()))?;
    spec.check_ratios()?;
    if dataset.is_empty() {
        return Err(SplitError::EmptyDataset);
    }
    let mut groups: IndexMap<String, Vec<usize>> = IndexMap::new();
    let mut ungrouped = 0;
    for (i, r) in dataset.records().iter().enumerate() {
        match r.field(field) {
            Some(g) => groups.entry(g).or_default().push(i),
            None => ungrouped += 1,
        }
    }
    if groups.is_empty() {
        return Err(SplitError::MissingGroupField(field.to_string()));
    }
    let mut notes = Vec::new();
    if ungrouped > 0 {
        notes.push(format!("{ungrouped} records without {field:?} excluded"));
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut seeded(spec.seed));
    let sizes = if groups.len() == 1 {
        notes.push(format!("only one {field:?} group; everything is in train"));
        [1, 0, 0]
    } else {
        largest_remainder(groups.len(), &spec.ratios)
    };
    let mut group_part = vec![None; groups.len()];
    deal(&order, sizes, &mut group_part);
    let mut assignment = vec![None; dataset.len()];
    for (g, members) in groups.values().enumerate() {
        for &i in members {
            assignment[i] = group_part[g];
        }
    }
    Ok(Split::from_assignment(dataset, &assignment, spec.clone(), notes))
}

/// Hold out every record with `event == holdout` as the test set; split the
/// rest into train/dev (stratified, seeded).
pub fn event_holdout_split(
    dataset: &Dataset,
    holdout: &str,
    dev_ratio: f64,
    seed: u64,
) -> Result<Split, SplitError> {
    let spec = SplitSpec {
        ratios: [1.0 - dev_ratio, dev_ratio, 0.0],
        seed,
        stratify: true,
        holdout: Some(Holdout {
            field: "event".into(),
            value: holdout.into(),
        }),
        ..SplitSpec::default()
    };
    holdout_split(dataset, &spec)
}

fn holdout_split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split, SplitError> {
    let h = spec
        .holdout
        .as_ref()
        .ok_or_else(|| SplitError::Spec("holdout_split needs holdout".into()))?;
    let [train, dev, _] = spec.ratios;
    if !(0.0..=1.0).contains(&dev) || train < 0.0 || (train + dev) <= 0.0 {
        return Err(SplitError::Ratio(format!("{:?}", spec.ratios)));
    }
    let mut assignment = vec![None; dataset.len()];
    let mut rest = Vec::new();
    for (i, r) in dataset.records().iter().enumerate() {
        if r.field(&h.field).as_deref() == Some(h.value.as_str()) {
            assignment[i] = Some(Partition::Test);
        } else {
            rest.push(i);
        }
    }
    if rest.len() == dataset.len() {
        return Err(SplitError::UnknownEvent {
            field: h.field.clone(),
            value: h.value.clone(),
        });
    }
    let norm = [train / (train + dev), dev / (train + dev), 0.0];
    partition_records(
        dataset,
        &rest,
        &norm,
        spec.stratify,
        &mut seeded(spec.seed),
        &mut assignment,
    );
    Ok(Split::from_assignment(dataset, &assignment, spec.clone(), Vec::new()))
}

fn fixed_split(dataset: &Dataset, spec: &SplitSpec, field: &str) -> Result<Split, SplitError> {
    let mut assignment = vec![None; dataset.len()];
    let mut unassigned = 0;
    for (i, r) in dataset.records().iter().enumerate() {
        match r.field(field) {
            Some(v) => {
                assignment[i] = Some(Partition::parse(&v).ok_or_else(|| {
                    SplitError::Spec(format!("record {} has unknown partition {v:?}", r.id))
                })?)
            }
            None => unassigned += 1,
        }
    }
    if unassigned == dataset.len() {
        return Err(SplitError::MissingGroupField(field.to_string()));
    }
    let notes = if unassigned > 0 {
        vec![format!("{unassigned} records without {field:?} excluded")]
    } else {
        Vec::new()
    };
    Ok(Split::from_assignment(dataset, &assignment, spec.clone(), notes))
}

/// Run a complete [`SplitSpec`]: filters and subsampling, then the partition
/// method it selects. Returns the split and the dataset it partitions.
pub fn apply_spec(dataset: &Dataset, spec: &SplitSpec) -> Result<(Split, Dataset), SplitError> {
    let mut ds = dataset.clone();
    let mut notes = Vec::new();
    if let Some(labels) = &spec.label_filter {
        ds = label_filter(&ds, labels)?;
    }
    if let Some(events) = &spec.events {
        ds = restrict_field(&ds, "event", events);
    }
    if spec.exclude_conflicting_groups {
        let field = spec.group_by.as_deref().ok_or_else(|| {
            SplitError::Spec("exclude_conflicting_groups needs group_by".into())
        })?;
        let conflicting = find_conflicting_groups(&ds, field);
        if !conflicting.is_empty() {
            notes.push(format!(
                "removed conflicting {field} groups: {}",
                conflicting.join(", ")
            ));
            let drop: HashSet<String> = conflicting.into_iter().collect();
            let kept = ds
                .records()
                .iter()
                .filter(|r| r.field(field).is_none_or(|g| !drop.contains(&g)))
                .cloned()
                .collect();
            ds = ds.derive(ds.label_set().clone(), kept);
        }
    }
    if let Some(q) = &spec.quotas {
        ds = quota_subsample(&ds, q, spec.min_reply_count, spec.seed)?;
    } else if let Some(min) = spec.min_reply_count {
        let kept = ds
            .records()
            .iter()
            .filter(|r| r.reply_count.is_some_and(|n| n >= min))
            .cloned()
            .collect();
        ds = ds.derive(ds.label_set().clone(), kept);
    }
    if ds.is_empty() {
        return Err(SplitError::EmptyDataset);
    }
    let mut split = if let Some(field) = &spec.partition_field {
        fixed_split(&ds, spec, field)?
    } else if spec.holdout.is_some() {
        holdout_split(&ds, spec)?
    } else if spec.group_by.is_some() {
        group_split(&ds, spec)?
    } else {
        random_split(&ds, spec)?
    };
    notes.append(&mut split.notes);
    split.notes = notes;
    Ok((split, ds))
}

/// Restrict a dataset to the ids of one partition, keeping dataset order.
pub fn subset(dataset: &Dataset, ids: &[String]) -> Dataset {
    let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
    let records = dataset
        .records()
        .iter()
        .filter(|r| keep.contains(r.id.as_str()))
        .cloned()
        .collect();
    dataset.derive(dataset.label_set().clone(), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelSet, Record};
    use proptest::prelude::*;

    fn balanced(n: usize) -> Dataset {
        let ls = LabelSet::new(["a", "b"]).unwrap();
        let recs = (0..n)
            .map(|i| Record::new((i + 1).to_string(), "", if i % 2 == 0 { "a" } else { "b" }))
            .collect();
        Dataset::new("bal", ls, recs).unwrap()
    }

    #[test]
    fn stratified_70_10_20_exact() {
        let ds = balanced(100);
        let s = random_split(&ds, &SplitSpec::with_ratios([0.7, 0.1, 0.2], 1)).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (70, 10, 20));
        let [tr, dv, te] = s.label_counts(&ds);
        for l in ["a", "b"] {
            assert_eq!((tr[l], dv[l], te[l]), (35, 5, 10));
        }
        assert!(s.check(&ds).is_empty());
    }

    #[test]
    fn same_seed_same_split() {
        let ds = balanced(57);
        let spec = SplitSpec::with_ratios([0.7, 0.1, 0.2], 42);
        assert_eq!(random_split(&ds, &spec).unwrap(), random_split(&ds, &spec).unwrap());
        let other = SplitSpec::with_ratios([0.7, 0.1, 0.2], 43);
        assert_ne!(
            random_split(&ds, &spec).unwrap().train,
            random_split(&ds, &other).unwrap().train
        );
    }

    #[test]
    fn bad_ratios_rejected() {
        let ds = balanced(10);
        assert!(matches!(
            random_split(&ds, &SplitSpec::with_ratios([0.5, 0.1, 0.1], 0)),
            Err(SplitError::Ratio(_))
        ));
        assert!(matches!(
            random_split(&ds, &SplitSpec::with_ratios([1.2, -0.1, -0.1], 0)),
            Err(SplitError::Ratio(_))
        ));
        let empty = Dataset::new("e", ds.label_set().clone(), vec![]).unwrap();
        assert!(matches!(
            random_split(&empty, &SplitSpec::default()),
            Err(SplitError::EmptyDataset)
        ));
    }

    fn articles(n_articles: usize, per: usize) -> Dataset {
        let ls = LabelSet::new(["fake", "real"]).unwrap();
        let mut recs = Vec::new();
        for a in 0..n_articles {
            for t in 0..per {
                let label = if a % 3 == 0 { "fake" } else { "real" };
                recs.push(
                    Record::new((a * 1000 + t + 1).to_string(), "", label)
                        .with_article(format!("politifact{a}")),
                );
            }
        }
        Dataset::new("pf", ls, recs).unwrap()
    }

    #[test]
    fn groups_never_span_partitions() {
        let ds = articles(10, 10);
        let spec = SplitSpec {
            ratios: [0.75, 0.10, 0.15],
            group_by: Some("article_id".into()),
            seed: 3,
            ..SplitSpec::default()
        };
        let s = group_split(&ds, &spec).unwrap();
        assert!(s.check(&ds).is_empty());
        // 10 groups at 75/10/15 -> 7.5/1/1.5 -> 8/1/1 by largest remainder (tie to train)
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (80, 10, 10));
    }

    #[test]
    fn single_group_goes_to_train_with_note() {
        let ds = articles(1, 5);
        let spec = SplitSpec {
            group_by: Some("article_id".into()),
            ..SplitSpec::default()
        };
        let s = group_split(&ds, &spec).unwrap();
        assert_eq!(s.train.len(), 5);
        assert!(!s.notes.is_empty());
    }

    #[test]
    fn missing_group_field() {
        let ds = balanced(4);
        let spec = SplitSpec {
            group_by: Some("article_id".into()),
            ..SplitSpec::default()
        };
        assert!(matches!(
            group_split(&ds, &spec),
            Err(SplitError::MissingGroupField(_))
        ));
    }

    fn events() -> Dataset {
        let ls = LabelSet::new(["true", "false", "unverified"]).unwrap();
        let sizes = [("charliehebdo", 40), ("ferguson", 30), ("sydneysiege", 20), ("ottawashooting", 15), ("germanwings-crash", 10)];
        let mut recs = Vec::new();
        let mut id = 1;
        for (e, n) in sizes {
            for i in 0..n {
                recs.push(Record::new(id.to_string(), "", ls.get(i % 3)).with_event(e));
                id += 1;
            }
        }
        Dataset::new("pheme5", ls, recs).unwrap()
    }

    #[test]
    fn event_holdout() {
        let ds = events();
        let s = event_holdout_split(&ds, "charliehebdo", 0.1, 5).unwrap();
        assert_eq!(s.test.len(), 40);
        assert!(s.check(&ds).is_empty());
        let idx = ds.id_index();
        let test_events: HashSet<_> = s
            .test
            .iter()
            .map(|id| ds.records()[idx[id.as_str()]].event.clone().unwrap())
            .collect();
        assert_eq!(test_events, HashSet::from(["charliehebdo".to_string()]));
        let s0 = event_holdout_split(&ds, "charliehebdo", 0.0, 5).unwrap();
        assert!(s0.dev.is_empty());
        assert_eq!(s0.train.len(), 75);
        assert!(matches!(
            event_holdout_split(&ds, "nowhere", 0.1, 5),
            Err(SplitError::UnknownEvent { .. })
        ));
    }

    #[test]
    fn fixed_partition_field() {
        let ls = LabelSet::new(["x"]).unwrap();
        let recs: Vec<Record> = ["train", "dev", "test", "train"]
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut r = Record::new((i + 1).to_string(), "", "x");
                r.extra.insert("split".into(), serde_json::Value::String(p.to_string()));
                r
            })
            .collect();
        let ds = Dataset::new("w", ls, recs).unwrap();
        let spec = SplitSpec {
            partition_field: Some("split".into()),
            ..SplitSpec::default()
        };
        let (s, _) = apply_spec(&ds, &spec).unwrap();
        assert_eq!(s.train, ["1", "4"]);
        assert_eq!(s.dev, ["2"]);
        assert_eq!(s.test, ["3"]);
    }

    #[test]
    fn conflicting_groups_removed_by_spec() {
        let ls = LabelSet::new(["fake", "real"]).unwrap();
        let mut recs = Vec::new();
        for (i, (a, l)) in [
            ("politifact14920", "fake"),
            ("politifact14920", "real"),
            ("politifact14940", "real"),
            ("politifact14940", "fake"),
            ("politifact1", "real"),
            ("politifact2", "fake"),
            ("politifact3", "fake"),
        ]
        .iter()
        .enumerate()
        {
            recs.push(Record::new((i + 1).to_string(), "", *l).with_article(*a));
        }
        let ds = Dataset::new("pf", ls, recs).unwrap();
        assert_eq!(
            find_conflicting_groups(&ds, "article_id"),
            ["politifact14920", "politifact14940"]
        );
        let spec = SplitSpec {
            group_by: Some("article_id".into()),
            exclude_conflicting_groups: true,
            ratios: [0.75, 0.10, 0.15],
            ..SplitSpec::default()
        };
        let (s, filtered) = apply_spec(&ds, &spec).unwrap();
        assert_eq!(filtered.len(), 3);
        assert_eq!(s.len(), 3);
        assert!(s.notes[0].contains("politifact14920"));
    }

    proptest! {
        #[test]
        fn largest_remainder_is_within_one(n in 0usize..5000, a in 0u32..100, b in 0u32..100) {
            let total = (a + b + 1) as f64;
            let ratios = [a as f64 / total, b as f64 / total, 1.0 / total];
            let sizes = largest_remainder(n, &ratios);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            for i in 0..3 {
                prop_assert!((sizes[i] as f64 - ratios[i] * n as f64).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn stratified_counts_within_one(n in 1usize..300, seed in 0u64..1000, k in 1usize..5) {
            let labels: Vec<String> = (0..k).map(|i| format!("l{i}")).collect();
            let ls = LabelSet::new(labels.clone()).unwrap();
            let recs = (0..n)
                .map(|i| Record::new((i + 1).to_string(), "", labels[(i * 7 + i / 3) % k].clone()))
                .collect();
            let ds = Dataset::new("p", ls, recs).unwrap();
            let ratios = [0.7, 0.1, 0.2];
            let s = random_split(&ds, &SplitSpec::with_ratios(ratios, seed)).unwrap();
            prop_assert!(s.check(&ds).is_empty());
            prop_assert_eq!(s.len(), n);
            let totals = crate::model::label_distribution(&ds);
            let counts = s.label_counts(&ds);
            for (l, &t) in &totals {
                for p in 0..3 {
                    prop_assert!((counts[p][l] as f64 - ratios[p] * t as f64).abs() <= 1.0);
                }
            }
        }
    }
}
