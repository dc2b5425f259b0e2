//! Deterministic random forest over ordinal integer features, and the
//! stratified random baseline it is judged against.
//!
//! Defaults follow the common reference configuration (100 trees, Gini,
//! sqrt feature subsampling, bootstrap on, `min_samples_split = 2`,
//! `min_samples_leaf = 1`) with `max_depth = 25`. Each tree draws from its
//! own ChaCha8 stream seeded by `seed ^ mix64(tree_index)`, so the fitted
//! model does not depend on how many threads trained it.

mod baseline;
mod tree;

pub use baseline::{
    baseline_expected_macro_f1, baseline_monte_carlo_macro_f1, BaselineError, StratifiedBaseline,
};
pub use tree::{fit_tree, DecisionTree, Node};

use std::collections::HashMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LabelSet;
use crate::rng::{derive_seed, seeded};
use tree::{argmax_lowest, check_inputs, grow, Item};

/// Serialization format version of [`ForestModel`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForestError {
    #[error("no training rows")]
    EmptyInput,
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("class index {class} out of range for {n_classes} classes")]
    LabelOutOfRange { class: usize, n_classes: usize },
    #[error("row has {found} features, model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
}

/// Number of features examined per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n_features as f64).sqrt() as usize).max(1),
            MaxFeatures::All => n_features,
            MaxFeatures::Fixed(k) => k.clamp(1, n_features),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 25,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::InvalidConfig(m.to_string()));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        if self.max_features == MaxFeatures::Fixed(0) {
            return bad("max_features must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub config: ForestConfig,
    pub label_set: LabelSet,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

/// Collapse samples into distinct `(row, class)` groups.
struct Grouped {
    table: Vec<Vec<i32>>,
    /// group of each sample
    sample_group: Vec<u32>,
    /// (row in `table`, class) of each group
    groups: Vec<(u32, u32)>,
}

fn group_samples(x: &[Vec<i32>], y: &[usize]) -> Grouped {
    let mut row_ids: HashMap<&[i32], u32> = HashMap::new();
    let mut table = Vec::new();
    let mut group_ids: HashMap<(u32, u32), u32> = HashMap::new();
    let mut groups = Vec::new();
    let mut sample_group = Vec::with_capacity(x.len());
    for (row, &class) in x.iter().zip(y) {
        let r = *row_ids.entry(row.as_slice()).or_insert_with(|| {
            table.push(row.clone());
            (table.len() - 1) as u32
        });
        let key = (r, class as u32);
        let g = *group_ids.entry(key).or_insert_with(|| {
            groups.push(key);
            (groups.len() - 1) as u32
        });
        sample_group.push(g);
    }
    Grouped {
        table,
        sample_group,
        groups,
    }
}

/// Train `config.n_trees` trees, in parallel when a thread pool is available.
/// `y` holds class indices into `label_set`.
pub fn fit_forest(
    x: &[Vec<i32>],
    y: &[usize],
    label_set: &LabelSet,
    config: &ForestConfig,
) -> Result<ForestModel, ForestError> {
    config.validate()?;
    let n_classes = label_set.len();
    let width = check_inputs(x, y, n_classes)?;
    let grouped = group_samples(x, y);
    let n = x.len();

    let trees: Vec<DecisionTree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(derive_seed(config.seed, t as u64));
            let mut weights = vec![0u64; grouped.groups.len()];
            if config.bootstrap {
                for _ in 0..n {
                    let s = rng.gen_range(0..n);
                    weights[grouped.sample_group[s] as usize] += 1;
                }
            } else {
                for &g in &grouped.sample_group {
                    weights[g as usize] += 1;
                }
            }
            let items: Vec<Item> = grouped
                .groups
                .iter()
                .zip(&weights)
                .filter(|(_, &w)| w > 0)
                .map(|(&(row, class), &weight)| Item { row, class, weight })
                .collect();
            grow(&grouped.table, items, width, n_classes, config, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        label_set: label_set.clone(),
        n_features: width,
        trees,
    })
}

impl ForestModel {
    /// Majority vote over trees; vote ties go to the label earliest in the
    /// label set.
    pub fn predict(&self, x: &[Vec<i32>]) -> Result<Vec<usize>, ForestError> {
        if let Some(r) = x.iter().find(|r| r.len() != self.n_features) {
            return Err(ForestError::WidthMismatch {
                expected: self.n_features,
                found: r.len(),
            });
        }
        let n_classes = self.label_set.len();
        Ok(x.iter()
            .map(|row| {
                let mut votes = vec![0u64; n_classes];
                for t in &self.trees {
                    votes[t.predict_row(row)] += 1;
                }
                argmax_lowest(&votes)
            })
            .collect())
    }

    pub fn predict_labels(&self, x: &[Vec<i32>]) -> Result<Vec<String>, ForestError> {
        Ok(self
            .predict(x)?
            .into_iter()
            .map(|c| self.label_set.get(c).to_string())
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels2() -> LabelSet {
        LabelSet::new(["a", "b"]).unwrap()
    }

    #[test]
    fn single_tree_forest_matches_fit_tree() {
        let x: Vec<Vec<i32>> = (0..40).map(|i| vec![i % 10, (i * 7) % 10]).collect();
        let y: Vec<usize> = (0..40).map(|i| ((i * 3) % 4 == 0) as usize).collect();
        let c = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..ForestConfig::default()
        };
        let forest = fit_forest(&x, &y, &labels2(), &c).unwrap();
        let tree = fit_tree(&x, &y, 2, &c).unwrap();
        let probe: Vec<Vec<i32>> = (0..100).map(|i| vec![i % 10, i / 10]).collect();
        let from_tree: Vec<usize> = probe.iter().map(|r| tree.predict_row(r)).collect();
        assert_eq!(forest.predict(&probe).unwrap(), from_tree);
    }

    #[test]
    fn vote_ties_go_to_first_label() {
        let leaf = |c: Vec<u64>| DecisionTree {
            nodes: vec![Node::Leaf { class_counts: c }],
            n_features: 1,
        };
        let model = ForestModel {
            format_version: MODEL_FORMAT_VERSION,
            config: ForestConfig::default(),
            label_set: labels2(),
            n_features: 1,
            trees: vec![leaf(vec![1, 0]), leaf(vec![0, 1])],
        };
        assert_eq!(model.predict_labels(&[vec![0]]).unwrap(), ["a"]);
        let flipped = ForestModel {
            label_set: LabelSet::new(["b", "a"]).unwrap(),
            ..model
        };
        assert_eq!(flipped.predict(&[vec![0]]).unwrap(), [0]);
    }

    #[test]
    fn single_tree_on_own_pure_row() {
        let c = ForestConfig {
            n_trees: 1,
            ..ForestConfig::default()
        };
        let m = fit_forest(&[vec![4, 2]], &[1], &labels2(), &c).unwrap();
        assert_eq!(m.predict_labels(&[vec![4, 2]]).unwrap(), ["b"]);
    }

    #[test]
    fn width_mismatch_on_predict() {
        let m = fit_forest(&[vec![1, 2], vec![3, 4]], &[0, 1], &labels2(), &ForestConfig::default())
            .unwrap();
        assert_eq!(
            m.predict(&[vec![1]]),
            Err(ForestError::WidthMismatch {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn identical_models_regardless_of_thread_count() {
        let x: Vec<Vec<i32>> = (0..300).map(|i| vec![(i * 31) % 10, (i * 17) % 10, i % 7]).collect();
        let y: Vec<usize> = (0..300).map(|i| (i * 13 % 5 < 2) as usize).collect();
        let c = ForestConfig {
            n_trees: 16,
            seed: 99,
            ..ForestConfig::default()
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| fit_forest(&x, &y, &labels2(), &c).unwrap());
        let b = four.install(|| fit_forest(&x, &y, &labels2(), &c).unwrap());
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(ForestModel::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn config_validation() {
        for bad in [
            ForestConfig { n_trees: 0, ..Default::default() },
            ForestConfig { max_depth: 0, ..Default::default() },
            ForestConfig { min_samples_split: 1, ..Default::default() },
            ForestConfig { min_samples_leaf: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(ForestError::InvalidConfig(_))));
        }
        assert_eq!(MaxFeatures::Sqrt.resolve(3), 1);
        assert_eq!(MaxFeatures::Sqrt.resolve(9), 3);
        assert_eq!(MaxFeatures::Fixed(5).resolve(3), 3);
    }
}
