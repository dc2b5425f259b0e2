//! Classification metrics, prediction-file scoring, and tweet-to-article
//! majority voting.
//!
//! Conventions: F1 is 0 when precision and recall are both 0; macro F1
//! averages over labels that occur in the gold data; a gold id without a
//! prediction counts as a miss unless [`MissingMode::Exclude`] is chosen.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{Dataset, LabelSet};
use crate::splits::Split;

/// id -> label, in a stable order.
pub type LabelMap = IndexMap<String, String>;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label {label:?} (id {id}) is not in the label set")]
    UnknownLabel { id: String, label: String },
    #[error("no gold labels to evaluate")]
    EmptyGold,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMode {
    /// Gold ids without a prediction are scored as wrong.
    #[default]
    Wrong,
    /// Gold ids without a prediction are dropped before scoring.
    Exclude,
}

/// Rows are gold labels, columns predictions, both in label-set order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: LabelSet,
    pub counts: Vec<Vec<u64>>,
    /// Gold items with no prediction, per gold label (scored as misses).
    pub missing: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: LabelSet) -> Self {
        let k = labels.len();
        Self {
            labels,
            counts: vec![vec![0; k]; k],
            missing: vec![0; k],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.missing.iter().sum::<u64>()
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum::<u64>() + self.missing[c]
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_class: IndexMap<String, ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub n_evaluated: u64,
    pub n_missing_predictions: u64,
    pub missing_mode: MissingMode,
    pub confusion: ConfusionMatrix,
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl EvalResult {
    pub fn from_confusion(confusion: ConfusionMatrix, n_missing: u64, mode: MissingMode) -> Self {
        let mut per_class = IndexMap::new();
        let mut f1_sum = 0.0;
        let mut scored = 0usize;
        let mut correct = 0;
        for (c, label) in confusion.labels.labels().iter().enumerate() {
            let tp = confusion.counts[c][c];
            correct += tp;
            let support = confusion.support(c);
            let precision = ratio(tp, confusion.predicted(c));
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            if support > 0 {
                f1_sum += f1;
                scored += 1;
            }
            per_class.insert(
                label.clone(),
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                },
            );
        }
        let n_evaluated = confusion.total();
        Self {
            per_class,
            macro_f1: if scored == 0 { 0.0 } else { f1_sum / scored as f64 },
            accuracy: ratio(correct, n_evaluated),
            n_evaluated,
            n_missing_predictions: n_missing,
            missing_mode: mode,
            confusion,
        }
    }

    pub fn f1(&self, label: &str) -> Option<f64> {
        self.per_class.get(label).map(|m| m.f1)
    }
}

/// Score `pred` against `gold`. Predictions for ids outside `gold` are ignored.
pub fn evaluate(
    gold: &LabelMap,
    pred: &LabelMap,
    label_set: &LabelSet,
    mode: MissingMode,
) -> Result<EvalResult, MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::EmptyGold);
    }
    let index = |id: &str, label: &str| {
        label_set
            .index_of(label)
            .ok_or_else(|| MetricsError::UnknownLabel {
                id: id.to_string(),
                label: label.to_string(),
            })
    };
    for (id, label) in pred {
        index(id, label)?;
    }
    let mut cm = ConfusionMatrix::new(label_set.clone());
    let mut n_missing = 0;
    for (id, g) in gold {
        let gi = index(id, g)?;
        match pred.get(id) {
            Some(p) => cm.counts[gi][index(id, p)?] += 1,
            None => {
                n_missing += 1;
                if mode == MissingMode::Wrong {
                    cm.missing[gi] += 1;
                }
            }
        }
    }
    if cm.total() == 0 {
        return Err(MetricsError::EmptyGold);
    }
    Ok(EvalResult::from_confusion(cm, n_missing, mode))
}

/// Read `(id, label)` predictions from CSV (header `id,label`) or JSONL
/// (`{"id": ..., "label": ...}`), chosen by extension.
pub fn read_predictions(path: &Path) -> Result<LabelMap, MetricsError> {
    let io = |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let parse = |line: u64, message: String| MetricsError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = LabelMap::new();
    let mut insert = |line: u64, id: String, label: String| {
        if id.is_empty() {
            return Err(parse(line, "empty id".into()));
        }
        if out.insert(id.clone(), label).is_some() {
            return Err(parse(line, format!("duplicate prediction for id {id}")));
        }
        Ok(())
    };
    let is_csv = path.extension().and_then(|e| e.to_str()) == Some("csv");
    let file = File::open(path).map_err(io)?;
    if is_csv {
        let mut reader = csv::Reader::from_reader(BufReader::new(file));
        let headers = reader.headers().map_err(|e| parse(1, e.to_string()))?.clone();
        let col = |n: &str| {
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| parse(1, format!("missing column {n:?}")))
        };
        let (id_col, label_col) = (col("id")?, col("label")?);
        for row in reader.records() {
            let row = row.map_err(|e| {
                parse(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            insert(
                line,
                row.get(id_col).unwrap_or("").to_string(),
                row.get(label_col).unwrap_or("").to_string(),
            )?;
        }
    } else {
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let n = i as u64 + 1;
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line).map_err(|e| parse(n, e.to_string()))?;
            let field = |k: &str| match v.get(k) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(Value::Number(x)) => Ok(x.to_string()),
                _ => Err(parse(n, format!("missing or non-scalar {k:?}"))),
            };
            insert(n, field("id")?, field("label")?)?;
        }
    }
    Ok(out)
}

/// Gold labels of the given ids that exist in the dataset, in split order.
pub fn gold_labels(dataset: &Dataset, ids: &[String]) -> LabelMap {
    let index = dataset.id_index();
    ids.iter()
        .filter_map(|id| {
            index
                .get(id.as_str())
                .map(|&i| (id.clone(), dataset.records()[i].label.clone()))
        })
        .collect()
}

/// Score a prediction file on the split's test partition.
pub fn evaluate_prediction_file(
    dataset: &Dataset,
    split: &Split,
    path: &Path,
    mode: MissingMode,
) -> Result<EvalResult, MetricsError> {
    let pred = read_predictions(path)?;
    let gold = gold_labels(dataset, &split.test);
    evaluate(&gold, &pred, dataset.label_set(), mode)
}

/// How to settle an article whose tweet votes tie.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// The tied label earliest in the label set wins.
    #[default]
    LabelOrder,
    /// This label wins whenever it is among the tied labels; otherwise
    /// label-set order decides.
    Prefer(String),
}

/// Turn tweet predictions into article predictions by majority vote.
/// Articles with fewer than `min_tweets` predicted tweets are omitted.
/// Tweets missing from `mapping` or with labels outside `label_set` are skipped.
pub fn aggregate_article_votes(
    tweet_preds: &LabelMap,
    mapping: &HashMap<String, String>,
    label_set: &LabelSet,
    min_tweets: usize,
    tie: &TieRule,
) -> BTreeMap<String, String> {
    let mut votes: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for (id, label) in tweet_preds {
        let (Some(article), Some(c)) = (mapping.get(id), label_set.index_of(label)) else {
            continue;
        };
        votes
            .entry(article.as_str())
            .or_insert_with(|| vec![0; label_set.len()])[c] += 1;
    }
    votes
        .into_iter()
        .filter(|(_, v)| v.iter().sum::<u64>() >= min_tweets as u64)
        .map(|(article, v)| {
            let top = *v.iter().max().expect("non-empty");
            let tied: Vec<usize> = (0..v.len()).filter(|&c| v[c] == top).collect();
            let winner = match tie {
                TieRule::Prefer(p) => label_set
                    .index_of(p)
                    .filter(|c| tied.contains(c))
                    .unwrap_or(tied[0]),
                TieRule::LabelOrder => tied[0],
            };
            (article.to_string(), label_set.get(winner).to_string())
        })
        .collect()
}

/// tweet id -> article id for records that carry one.
pub fn article_mapping(dataset: &Dataset) -> HashMap<String, String> {
    dataset
        .records()
        .iter()
        .filter_map(|r| r.article_id.clone().map(|a| (r.id.clone(), a)))
        .collect()
}

/// Gold article labels, by majority over each article's tweet labels.
pub fn article_gold(dataset: &Dataset) -> BTreeMap<String, String> {
    let gold: LabelMap = dataset
        .records()
        .iter()
        .map(|r| (r.id.clone(), r.label.clone()))
        .collect();
    aggregate_article_votes(
        &gold,
        &article_mapping(dataset),
        dataset.label_set(),
        1,
        &TieRule::LabelOrder,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(pairs: &[(&str, &str)]) -> LabelMap {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn ab() -> LabelSet {
        LabelSet::new(["a", "b"]).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let g = lm(&[("1", "a"), ("2", "b")]);
        let r = evaluate(&g, &g, &ab(), MissingMode::Wrong).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn hand_computed_binary_case() {
        // gold a a b b / pred a b b b: TP_a=1, FN_a=1, FP_a=0 -> P=1, R=1/2, F1=2/3
        // TP_b=2, FP_b=1 -> P=2/3, R=1, F1=0.8
        let g = lm(&[("1", "a"), ("2", "a"), ("3", "b"), ("4", "b")]);
        let p = lm(&[("1", "a"), ("2", "b"), ("3", "b"), ("4", "b")]);
        let r = evaluate(&g, &p, &ab(), MissingMode::Wrong).unwrap();
        assert!((r.f1("a").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1("b").unwrap() - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((r.macro_f1 - 0.7333).abs() < 1e-4);
    }

    #[test]
    fn constant_prediction_on_balanced_four_class() {
        let ls = LabelSet::new(["t", "f", "u", "n"]).unwrap();
        let mut g = LabelMap::new();
        let mut p = LabelMap::new();
        for (i, l) in ["t", "f", "u", "n"].iter().cycle().take(40).enumerate() {
            g.insert(i.to_string(), l.to_string());
            p.insert(i.to_string(), "u".to_string());
        }
        let r = evaluate(&g, &p, &ls, MissingMode::Wrong).unwrap();
        // P_u = 1/4, R_u = 1 -> F1_u = 2/5
        assert!((r.f1("u").unwrap() - 0.4).abs() < 1e-12);
        assert!((r.macro_f1 - 0.4 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn missing_predictions_strict_and_exclude() {
        let g = lm(&[("1", "a"), ("2", "a"), ("3", "b"), ("4", "b")]);
        let p = lm(&[("1", "a"), ("3", "b")]);
        let strict = evaluate(&g, &p, &ab(), MissingMode::Wrong).unwrap();
        assert_eq!(strict.n_missing_predictions, 2);
        assert_eq!(strict.n_evaluated, 4);
        assert_eq!(strict.accuracy, 0.5);
        let loose = evaluate(&g, &p, &ab(), MissingMode::Exclude).unwrap();
        assert_eq!(loose.n_evaluated, 2);
        assert_eq!(loose.macro_f1, 1.0);
    }

    #[test]
    fn unknown_predicted_label() {
        let g = lm(&[("1", "a")]);
        let p = lm(&[("1", "zzz")]);
        assert!(matches!(
            evaluate(&g, &p, &ab(), MissingMode::Wrong),
            Err(MetricsError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn article_votes() {
        let ls = LabelSet::new(["fake", "real"]).unwrap();
        let preds = lm(&[
            ("1", "fake"),
            ("2", "fake"),
            ("3", "real"),
            ("4", "real"),
            ("5", "fake"),
            ("6", "fake"),
            ("7", "real"),
            ("8", "real"),
        ]);
        let mapping: HashMap<String, String> = [
            ("1", "A"),
            ("2", "A"),
            ("3", "A"),
            ("4", "B"),
            ("5", "B"),
            ("6", "C"),
            ("7", "C"),
            ("7x", "C"),
            ("8", "C"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let out = aggregate_article_votes(&preds, &mapping, &ls, 3, &TieRule::LabelOrder);
        assert_eq!(out.get("A").map(String::as_str), Some("fake"));
        assert!(!out.contains_key("B"), "two tweets is below the minimum");
        // C: fake 1, real 2
        assert_eq!(out.get("C").map(String::as_str), Some("real"));

        let tie = lm(&[("1", "real"), ("2", "fake"), ("3", "real"), ("4", "fake")]);
        let m: HashMap<String, String> =
            (1..=4).map(|i| (i.to_string(), "T".to_string())).collect();
        let out = aggregate_article_votes(&tie, &m, &ls, 3, &TieRule::LabelOrder);
        assert_eq!(out["T"], "fake");
        let out = aggregate_article_votes(&tie, &m, &ls, 3, &TieRule::Prefer("real".into()));
        assert_eq!(out["T"], "real");
    }

    #[test]
    fn prediction_files_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("p.csv");
        std::fs::write(&csv, "id,label\n1,a\n2,b\n").unwrap();
        assert_eq!(read_predictions(&csv).unwrap(), lm(&[("1", "a"), ("2", "b")]));
        let jl = dir.path().join("p.jsonl");
        std::fs::write(&jl, "{\"id\": 1, \"label\": \"a\"}\n\n{\"id\": \"2\", \"label\": \"b\"}\n").unwrap();
        assert_eq!(read_predictions(&jl).unwrap(), lm(&[("1", "a"), ("2", "b")]));
        std::fs::write(&jl, "{\"id\": 1, \"label\": \"a\"}\n{\"id\": 2}\n").unwrap();
        assert!(matches!(
            read_predictions(&jl),
            Err(MetricsError::Parse { line: 2, .. })
        ));
    }
}
