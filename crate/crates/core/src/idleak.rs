//! The tweet-id digit test: train a random forest on nothing but the first
//! `k` digits of each id and compare its macro F1 with the stratified random
//! baseline. Because the leading digits encode posting time, a strong score
//! means labels can be read off collection time.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{baseline_expected_macro_f1, BaselineError};
use crate::forest::{fit_forest, ForestConfig, ForestError};
use crate::metrics::{evaluate, LabelMap, MetricsError, MissingMode};
use crate::model::Dataset;
use crate::rng::derive_seed;
use crate::snowflake::prefix_digits;
use crate::splits::{random_split, Split, SplitSpec};

#[derive(Debug, Error)]
pub enum IdLeakError {
    #[error("train or test partition is empty")]
    EmptySplit,
    #[error("every id has fewer than {k} digits")]
    AllIdsTooShort { k: usize },
    #[error("digit count must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("cannot generate split: {0}")]
    Split(#[from] crate::splits::SplitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    None,
    Mild,
    Moderate,
    Severe,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::None => "none",
            Verdict::Mild => "mild",
            Verdict::Moderate => "moderate",
            Verdict::Severe => "severe",
        }
    }
}

/// Upper bounds (exclusive) of the none, mild and moderate bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictThresholds {
    pub none: f64,
    pub mild: f64,
    pub moderate: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            none: 0.05,
            mild: 0.15,
            moderate: 0.40,
        }
    }
}

impl VerdictThresholds {
    pub fn grade(&self, leakage_score: f64) -> Verdict {
        if leakage_score < self.none {
            Verdict::None
        } else if leakage_score < self.mild {
            Verdict::Mild
        } else if leakage_score < self.moderate {
            Verdict::Moderate
        } else {
            Verdict::Severe
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.none <= self.mild && self.mild <= self.moderate
    }
}

/// Excess of `macro_f1` over `baseline`, as a fraction of the headroom
/// above the baseline, floored at 0.
pub fn leakage_score(macro_f1: f64, baseline: f64) -> f64 {
    if baseline >= 1.0 {
        0.0
    } else {
        ((macro_f1 - baseline) / (1.0 - baseline)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdLeakReport {
    pub toolkit_version: String,
    pub k: usize,
    pub per_class_f1: IndexMap<String, f64>,
    pub macro_f1: f64,
    pub baseline_macro_f1: f64,
    pub leakage_score: f64,
    pub verdict: Verdict,
    pub n_train: usize,
    pub n_test: usize,
    pub excluded_short_ids: usize,
    pub config: ForestConfig,
    pub thresholds: VerdictThresholds,
}

fn features(dataset: &Dataset, ids: &[String], k: usize) -> (Vec<Vec<i32>>, Vec<usize>, Vec<String>, usize) {
    let index = dataset.id_index();
    let mut x = Vec::with_capacity(ids.len());
    let mut y = Vec::with_capacity(ids.len());
    let mut kept = Vec::with_capacity(ids.len());
    let mut excluded = 0;
    for id in ids {
        let Some(&i) = index.get(id.as_str()) else {
            continue;
        };
        let r = &dataset.records()[i];
        let Some(label) = dataset.label_set().index_of(&r.label) else {
            continue;
        };
        match prefix_digits(&r.id, k) {
            Ok(p) => {
                x.push(p.digits().iter().map(|&d| d as i32).collect());
                y.push(label);
                kept.push(r.id.clone());
            }
            Err(_) => excluded += 1,
        }
    }
    (x, y, kept, excluded)
}

fn distribution(dataset: &Dataset, y: &[usize]) -> IndexMap<String, usize> {
    let mut d: IndexMap<String, usize> = dataset
        .label_set()
        .labels()
        .iter()
        .map(|l| (l.clone(), 0))
        .collect();
    for &c in y {
        d[c] += 1;
    }
    d
}

pub fn run_id_leak_test(
    dataset: &Dataset,
    split: &Split,
    k: usize,
    config: &ForestConfig,
) -> Result<IdLeakReport, IdLeakError> {
    run_id_leak_test_with(dataset, split, k, config, &VerdictThresholds::default())
}

/// Forest on the `k`-digit prefixes of the train ids, scored on the test ids.
/// Dev ids are unused. Ids with fewer than `k` digits are dropped and counted.
pub fn run_id_leak_test_with(
    dataset: &Dataset,
    split: &Split,
    k: usize,
    config: &ForestConfig,
    thresholds: &VerdictThresholds,
) -> Result<IdLeakReport, IdLeakError> {
    if k == 0 {
        return Err(IdLeakError::ZeroK);
    }
    if split.train.is_empty() || split.test.is_empty() {
        return Err(IdLeakError::EmptySplit);
    }
    let (x_train, y_train, _, ex_train) = features(dataset, &split.train, k);
    let (x_test, y_test, test_ids, ex_test) = features(dataset, &split.test, k);
    if x_train.is_empty() && x_test.is_empty() && ex_train + ex_test > 0 {
        return Err(IdLeakError::AllIdsTooShort { k });
    }
    if x_train.is_empty() || x_test.is_empty() {
        return Err(IdLeakError::EmptySplit);
    }
    let model = fit_forest(&x_train, &y_train, dataset.label_set(), config)?;
    let pred_idx = model.predict(&x_test)?;
    let ls = dataset.label_set();
    let gold: LabelMap = test_ids
        .iter()
        .zip(&y_test)
        .map(|(id, &c)| (id.clone(), ls.get(c).to_string()))
        .collect();
    let pred: LabelMap = test_ids
        .iter()
        .zip(&pred_idx)
        .map(|(id, &c)| (id.clone(), ls.get(c).to_string()))
        .collect();
    let eval = evaluate(&gold, &pred, ls, MissingMode::Wrong)?;
    let baseline = baseline_expected_macro_f1(
        &distribution(dataset, &y_train),
        &distribution(dataset, &y_test),
    )?;
    let score = leakage_score(eval.macro_f1, baseline);
    Ok(IdLeakReport {
        toolkit_version: crate::VERSION.to_string(),
        k,
        per_class_f1: eval.per_class.iter().map(|(l, m)| (l.clone(), m.f1)).collect(),
        macro_f1: eval.macro_f1,
        baseline_macro_f1: baseline,
        leakage_score: score,
        verdict: thresholds.grade(score),
        n_train: x_train.len(),
        n_test: x_test.len(),
        excluded_short_ids: ex_train + ex_test,
        config: config.clone(),
        thresholds: *thresholds,
    })
}

/// Where the suite's splits came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSource {
    /// The dataset's own benchmark split, used as is.
    Canonical,
    /// `n_splits` fresh stratified splits with seeds derived from `seed`.
    Generated {
        n_splits: usize,
        ratios: [f64; 3],
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub k_list: Vec<usize>,
    pub n_splits: usize,
    pub ratios: [f64; 3],
    pub seed: u64,
    pub forest: ForestConfig,
    pub thresholds: VerdictThresholds,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            k_list: vec![2, 3],
            n_splits: 5,
            ratios: [0.7, 0.1, 0.2],
            seed: 0,
            forest: ForestConfig::default(),
            thresholds: VerdictThresholds::default(),
        }
    }
}

/// Summary over the runs for one `k`. The verdict grades the median
/// leakage score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub baseline_mean: f64,
    pub leakage_mean: f64,
    pub leakage_std: f64,
    pub leakage_median: f64,
    pub verdict: Verdict,
    pub runs: Vec<IdLeakReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub toolkit_version: String,
    pub dataset: String,
    pub split_source: SplitSource,
    pub options: SuiteOptions,
    pub per_k: Vec<KSummary>,
}

impl SuiteReport {
    pub fn worst(&self) -> Option<&KSummary> {
        self.per_k
            .iter()
            .max_by(|a, b| a.leakage_median.total_cmp(&b.leakage_median))
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

fn summarize(k: usize, runs: Vec<IdLeakReport>, thresholds: &VerdictThresholds) -> KSummary {
    let macros: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
    let leaks: Vec<f64> = runs.iter().map(|r| r.leakage_score).collect();
    let bases: Vec<f64> = runs.iter().map(|r| r.baseline_macro_f1).collect();
    let (macro_f1_mean, macro_f1_std) = mean_std(&macros);
    let (leakage_mean, leakage_std) = mean_std(&leaks);
    let leakage_median = median(&leaks);
    KSummary {
        k,
        macro_f1_mean,
        macro_f1_std,
        baseline_mean: mean_std(&bases).0,
        leakage_mean,
        leakage_std,
        leakage_median,
        verdict: thresholds.grade(leakage_median),
        runs,
    }
}

/// The splits the suite runs on: the canonical one if given, otherwise
/// `n_splits` stratified splits seeded from `derive_seed(seed, i)`.
pub fn suite_splits(
    dataset: &Dataset,
    canonical: Option<&Split>,
    opts: &SuiteOptions,
) -> Result<(Vec<Split>, SplitSource), IdLeakError> {
    if let Some(s) = canonical {
        return Ok((vec![s.clone()], SplitSource::Canonical));
    }
    let splits = (0..opts.n_splits.max(1))
        .map(|i| {
            let spec = SplitSpec::with_ratios(opts.ratios, derive_seed(opts.seed, i as u64));
            random_split(dataset, &spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let source = SplitSource::Generated {
        n_splits: splits.len(),
        ratios: opts.ratios,
        seed: opts.seed,
    };
    Ok((splits, source))
}

/// Run the digit test for every `k` over every suite split. The forest seed
/// of split `i` is `derive_seed(forest.seed, i)`.
pub fn run_id_leak_suite(
    dataset: &Dataset,
    canonical: Option<&Split>,
    opts: &SuiteOptions,
) -> Result<SuiteReport, IdLeakError> {
    if dataset.is_empty() {
        return Err(IdLeakError::EmptySplit);
    }
    let (splits, split_source) = suite_splits(dataset, canonical, opts)?;
    let mut per_k = Vec::new();
    for &k in &opts.k_list {
        let runs = splits
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let config = ForestConfig {
                    seed: derive_seed(opts.forest.seed, i as u64),
                    ..opts.forest.clone()
                };
                run_id_leak_test_with(dataset, s, k, &config, &opts.thresholds)
            })
            .collect::<Result<Vec<_>, _>>()?;
        per_k.push(summarize(k, runs, &opts.thresholds));
    }
    Ok(SuiteReport {
        toolkit_version: crate::VERSION.to_string(),
        dataset: dataset.name.clone(),
        split_source,
        options: opts.clone(),
        per_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelSet, Record};
    use proptest::prelude::*;

    #[test]
    fn grading_bands() {
        let t = VerdictThresholds::default();
        assert_eq!(t.grade(0.0), Verdict::None);
        assert_eq!(t.grade(0.049), Verdict::None);
        assert_eq!(t.grade(0.05), Verdict::Mild);
        assert_eq!(t.grade(0.15), Verdict::Moderate);
        assert_eq!(t.grade(0.40), Verdict::Severe);
        assert_eq!(t.grade(1.0), Verdict::Severe);
    }

    #[test]
    fn score_edge_cases() {
        assert_eq!(leakage_score(0.2, 0.25), 0.0);
        assert_eq!(leakage_score(1.0, 0.25), 1.0);
        assert_eq!(leakage_score(1.0, 1.0), 0.0);
        assert!((leakage_score(0.625, 0.25) - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn score_in_unit_interval_and_monotone(m1 in 0.0f64..=1.0, m2 in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (s1, s2) = (leakage_score(m1, b), leakage_score(m2, b));
            prop_assert!((0.0..=1.0).contains(&s1));
            if m1 <= m2 {
                prop_assert!(s1 <= s2);
            }
        }
    }

    fn small() -> Dataset {
        let ls = LabelSet::new(["a", "b"]).unwrap();
        let recs = (0..60u64)
            .map(|i| {
                let (id, l) = if i % 2 == 0 {
                    (format!("1{:05}", i), "a")
                } else {
                    (format!("9{:05}", i), "b")
                };
                Record::new(id, "", l)
            })
            .chain([Record::new("7", "", "a")])
            .collect();
        Dataset::new("s", ls, recs).unwrap()
    }

    #[test]
    fn separable_prefixes_are_severe_and_short_ids_counted() {
        let ds = small();
        let split = random_split(&ds, &SplitSpec::with_ratios([0.7, 0.1, 0.2], 1)).unwrap();
        let cfg = ForestConfig {
            n_trees: 10,
            ..ForestConfig::default()
        };
        let r = run_id_leak_test(&ds, &split, 1, &cfg).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.verdict, Verdict::Severe);
        let r2 = run_id_leak_test(&ds, &split, 2, &cfg).unwrap();
        assert_eq!(r2.excluded_short_ids, 1);
        assert_eq!(r, run_id_leak_test(&ds, &split, 1, &cfg).unwrap());
        assert!(matches!(
            run_id_leak_test(&ds, &split, 9, &cfg),
            Err(IdLeakError::AllIdsTooShort { k: 9 })
        ));
    }

    #[test]
    fn empty_partition() {
        let ds = small();
        let mut split = random_split(&ds, &SplitSpec::default()).unwrap();
        split.test.clear();
        assert!(matches!(
            run_id_leak_test(&ds, &split, 1, &ForestConfig::default()),
            Err(IdLeakError::EmptySplit)
        ));
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - 2.138089935).abs() < 1e-9);
    }
}
