//! CART classification tree over small ordinal integer features.
//!
//! Training works on *weighted distinct rows*: samples sharing a feature
//! row and a class are merged into one item whose weight is their
//! multiplicity (bootstrap copies included). This is exactly equivalent to
//! growing on the expanded sample list, and keeps training cost bounded by
//! the number of distinct digit prefixes rather than the dataset size.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ForestConfig, ForestError};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { class_counts: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root is `nodes[0]`; children are stored in depth-first order.
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl DecisionTree {
    pub fn leaf_for(&self, row: &[i32]) -> &[u64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if f64::from(row[*feature]) <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { class_counts } => return class_counts,
            }
        }
    }

    /// Majority class at the leaf reached by `row`; ties go to the lower index.
    pub fn predict_row(&self, row: &[i32]) -> usize {
        argmax_lowest(self.leaf_for(row))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) fn argmax_lowest(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Training item: a distinct feature row with one class and a multiplicity.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Item {
    pub row: u32,
    pub class: u32,
    pub weight: u64,
}

pub(crate) fn check_inputs(x: &[Vec<i32>], y: &[usize], n_classes: usize) -> Result<usize, ForestError> {
    if x.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(ForestError::LengthMismatch {
            rows: x.len(),
            labels: y.len(),
        });
    }
    let width = x[0].len();
    if width == 0 {
        return Err(ForestError::EmptyInput);
    }
    if let Some((row, r)) = x.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(ForestError::RaggedRows {
            row,
            expected: width,
            found: r.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(ForestError::LabelOutOfRange { class: bad, n_classes });
    }
    Ok(width)
}

/// Fit a single tree on unit-weight samples, drawing per-node feature
/// subsets from `config.seed` when `max_features` asks for them.
pub fn fit_tree(
    x: &[Vec<i32>],
    y: &[usize],
    n_classes: usize,
    config: &ForestConfig,
) -> Result<DecisionTree, ForestError> {
    config.validate()?;
    let width = check_inputs(x, y, n_classes)?;
    let items: Vec<Item> = y
        .iter()
        .enumerate()
        .map(|(i, &c)| Item {
            row: i as u32,
            class: c as u32,
            weight: 1,
        })
        .collect();
    let mut rng = crate::rng::seeded(config.seed);
    Ok(grow(x, items, width, n_classes, config, &mut rng))
}

struct Candidate {
    feature: usize,
    threshold: f64,
    /// Split quality `sum_c(L_c^2)/W_L + sum_c(R_c^2)/W_R` as `num / den`.
    /// Larger is better (lower weighted Gini).
    num: u128,
    den: u128,
}

impl Candidate {
    /// Strictly preferred over `other` under: larger score, then lower
    /// feature index, then lower threshold.
    fn beats(&self, other: &Candidate) -> bool {
        let lhs = self.num * other.den;
        let rhs = other.num * self.den;
        if lhs != rhs {
            return lhs > rhs;
        }
        (self.feature, self.threshold) < (other.feature, other.threshold)
    }
}

fn sum_sq(counts: &[u64]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

/// Best threshold on one feature, or `None` if the feature is constant at
/// this node or no threshold satisfies the leaf-size rule.
#[allow(clippy::too_many_arguments)]
fn best_on_feature(
    table: &[Vec<i32>],
    items: &[Item],
    feature: usize,
    n_classes: usize,
    total: &[u64],
    total_w: u64,
    min_leaf: u64,
    scratch: &mut Vec<(i32, u32, u64)>,
) -> (bool, Option<Candidate>) {
    scratch.clear();
    scratch.extend(
        items
            .iter()
            .map(|it| (table[it.row as usize][feature], it.class, it.weight)),
    );
    scratch.sort_unstable_by_key(|t| t.0);
    if scratch.first().map(|t| t.0) == scratch.last().map(|t| t.0) {
        return (false, None);
    }
    let mut left = vec![0u64; n_classes];
    let mut left_w = 0u64;
    let mut best: Option<Candidate> = None;
    let mut i = 0;
    while i < scratch.len() {
        let v = scratch[i].0;
        while i < scratch.len() && scratch[i].0 == v {
            left[scratch[i].1 as usize] += scratch[i].2;
            left_w += scratch[i].2;
            i += 1;
        }
        if i == scratch.len() {
            break;
        }
        let right_w = total_w - left_w;
        if left_w < min_leaf || right_w < min_leaf {
            continue;
        }
        let right: Vec<u64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let (wl, wr) = (left_w as u128, right_w as u128);
        let cand = Candidate {
            feature,
            threshold: (f64::from(v) + f64::from(scratch[i].0)) / 2.0,
            num: sum_sq(&left) * wr + sum_sq(&right) * wl,
            den: wl * wr,
        };
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    (true, best)
}

pub(crate) fn grow(
    table: &[Vec<i32>],
    items: Vec<Item>,
    n_features: usize,
    n_classes: usize,
    config: &ForestConfig,
    rng: &mut Rng,
) -> DecisionTree {
    let max_features = config.max_features.resolve(n_features);
    let min_leaf = config.min_samples_leaf as u64;
    let min_split = config.min_samples_split as u64;
    let mut nodes: Vec<Node> = Vec::new();
    let mut scratch = Vec::new();
    let mut features: Vec<usize> = (0..n_features).collect();

    // (items, depth, slot to patch in the parent)
    enum Slot {
        Root,
        Left(usize),
        Right(usize),
    }
    let mut stack: Vec<(Vec<Item>, usize, Slot)> = vec![(items, 0, Slot::Root)];
    while let Some((items, depth, slot)) = stack.pop() {
        let index = nodes.len();
        match slot {
            Slot::Root => {}
            Slot::Left(p) | Slot::Right(p) => {
                if let Node::Split { left, right, .. } = &mut nodes[p] {
                    if matches!(slot, Slot::Left(_)) {
                        *left = index;
                    } else {
                        *right = index;
                    }
                }
            }
        }

        let mut total = vec![0u64; n_classes];
        for it in &items {
            total[it.class as usize] += it.weight;
        }
        let total_w: u64 = total.iter().sum();
        let pure = total.iter().filter(|&&c| c > 0).count() <= 1;

        let mut best: Option<Candidate> = None;
        if !pure && depth < config.max_depth && total_w >= min_split && total_w >= 2 * min_leaf {
            if max_features < n_features {
                features.shuffle(rng);
            } else {
                features.sort_unstable();
            }
            let mut visited = 0;
            for &f in &features {
                if visited >= max_features {
                    break;
                }
                let (varies, cand) = best_on_feature(
                    table, &items, f, n_classes, &total, total_w, min_leaf, &mut scratch,
                );
                if varies {
                    visited += 1;
                }
                if let Some(c) = cand {
                    if best.as_ref().is_none_or(|b| c.beats(b)) {
                        best = Some(c);
                    }
                }
            }
        }

        match best {
            None => nodes.push(Node::Leaf {
                class_counts: total,
            }),
            Some(c) => {
                let (left, right): (Vec<Item>, Vec<Item>) = items
                    .into_iter()
                    .partition(|it| f64::from(table[it.row as usize][c.feature]) <= c.threshold);
                nodes.push(Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: 0,
                    right: 0,
                });
                // left is popped first so node order is depth-first, left to right
                stack.push((right, depth + 1, Slot::Right(index)));
                stack.push((left, depth + 1, Slot::Left(index)));
            }
        }
    }
    DecisionTree { nodes, n_features }
}
