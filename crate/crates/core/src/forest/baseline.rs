//! Stratified random classifier: predicts each label with its training
//! frequency, independently of the input.
//!
//! With predicted rate `p_c` and true rate `q_c`, precision tends to `q_c`
//! and recall to `p_c`, so the expected per-class F1 is
//! `2 p_c q_c / (p_c + q_c)`. Macro F1 averages over classes present in the
//! test distribution.

use indexmap::IndexMap;
use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("label distribution has no mass")]
    EmptyDistribution,
    #[error("train and test distributions cover different labels")]
    MismatchedLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedBaseline {
    pub label_probs: IndexMap<String, f64>,
    pub seed: u64,
}

impl StratifiedBaseline {
    pub fn from_counts(counts: &IndexMap<String, usize>, seed: u64) -> Result<Self, BaselineError> {
        let total: usize = counts.values().sum();
        if total == 0 {
            return Err(BaselineError::EmptyDistribution);
        }
        Ok(Self {
            label_probs: counts
                .iter()
                .map(|(l, &c)| (l.clone(), c as f64 / total as f64))
                .collect(),
            seed,
        })
    }

    /// Draw `n` labels.
    pub fn sample(&self, n: usize) -> Vec<String> {
        let mut rng = seeded(self.seed);
        let labels: Vec<&String> = self.label_probs.keys().collect();
        let dist = WeightedIndex::new(self.label_probs.values().copied())
            .expect("probabilities are non-negative with positive total");
        (0..n)
            .map(|_| labels[dist.sample(&mut rng)].clone())
            .collect()
    }
}

fn rates(
    train: &IndexMap<String, usize>,
    test: &IndexMap<String, usize>,
) -> Result<Vec<(f64, f64)>, BaselineError> {
    let nt: usize = train.values().sum();
    let ns: usize = test.values().sum();
    if nt == 0 || ns == 0 {
        return Err(BaselineError::EmptyDistribution);
    }
    if test.keys().any(|k| !train.contains_key(k)) {
        return Err(BaselineError::MismatchedLabels);
    }
    Ok(train
        .iter()
        .map(|(l, &c)| {
            let q = *test.get(l).unwrap_or(&0) as f64 / ns as f64;
            (c as f64 / nt as f64, q)
        })
        .collect())
}

/// Closed-form expected macro F1 of the stratified random classifier
/// trained on `train` and scored on `test`.
pub fn baseline_expected_macro_f1(
    train: &IndexMap<String, usize>,
    test: &IndexMap<String, usize>,
) -> Result<f64, BaselineError> {
    let rates = rates(train, test)?;
    let scored: Vec<f64> = rates
        .iter()
        .filter(|(_, q)| *q > 0.0)
        .map(|&(p, q)| if p + q == 0.0 { 0.0 } else { 2.0 * p * q / (p + q) })
        .collect();
    Ok(scored.iter().sum::<f64>() / scored.len() as f64)
}

/// Monte-Carlo estimate: `draws` (gold, predicted) pairs with gold drawn
/// from `test` and predictions from `train`.
pub fn baseline_monte_carlo_macro_f1(
    train: &IndexMap<String, usize>,
    test: &IndexMap<String, usize>,
    draws: usize,
    seed: u64,
) -> Result<f64, BaselineError> {
    let rates = rates(train, test)?;
    let k = rates.len();
    let gold_dist =
        WeightedIndex::new(rates.iter().map(|r| r.1)).map_err(|_| BaselineError::EmptyDistribution)?;
    let pred_dist =
        WeightedIndex::new(rates.iter().map(|r| r.0)).map_err(|_| BaselineError::EmptyDistribution)?;
    let mut rng: Rng = seeded(seed);
    let mut tp = vec![0u64; k];
    let mut gold_n = vec![0u64; k];
    let mut pred_n = vec![0u64; k];
    for _ in 0..draws {
        let g = gold_dist.sample(&mut rng);
        let p = pred_dist.sample(&mut rng);
        gold_n[g] += 1;
        pred_n[p] += 1;
        if g == p {
            tp[g] += 1;
        }
    }
    let f1s: Vec<f64> = (0..k)
        .filter(|&c| gold_n[c] > 0)
        .map(|c| {
            let denom = gold_n[c] + pred_n[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    if f1s.is_empty() {
        return Err(BaselineError::EmptyDistribution);
    }
    Ok(f1s.iter().sum::<f64>() / f1s.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pairs: &[(&str, usize)]) -> IndexMap<String, usize> {
        pairs.iter().map(|(l, c)| (l.to_string(), *c)).collect()
    }

    #[test]
    fn balanced_four_class_is_quarter() {
        let d = dist(&[("t", 100), ("f", 100), ("u", 100), ("n", 100)]);
        assert_eq!(baseline_expected_macro_f1(&d, &d).unwrap(), 0.25);
    }

    #[test]
    fn single_class_is_one() {
        let d = dist(&[("only", 7)]);
        assert_eq!(baseline_expected_macro_f1(&d, &d).unwrap(), 1.0);
    }

    #[test]
    fn binary_matching_rates_average_to_half() {
        // F1_c -> q_c when p == q, and the q_c sum to 1.
        let train = dist(&[("inf", 3303), ("uninf", 3697)]);
        let test = dist(&[("inf", 944), ("uninf", 1056)]);
        let v = baseline_expected_macro_f1(&train, &test).unwrap();
        assert!((v - 0.5).abs() < 1e-3, "{v}");
    }

    #[test]
    fn monte_carlo_converges() {
        let train = dist(&[("a", 50), ("b", 30), ("c", 20)]);
        let test = dist(&[("a", 10), ("b", 60), ("c", 30)]);
        let cf = baseline_expected_macro_f1(&train, &test).unwrap();
        let mc = baseline_monte_carlo_macro_f1(&train, &test, 100_000, 3).unwrap();
        assert!((cf - mc).abs() < 0.01, "{cf} vs {mc}");
    }

    #[test]
    fn empty_distribution_errors() {
        let z = dist(&[("a", 0)]);
        assert_eq!(
            baseline_expected_macro_f1(&z, &z),
            Err(BaselineError::EmptyDistribution)
        );
    }

    #[test]
    fn sampling_follows_probabilities() {
        let b = StratifiedBaseline::from_counts(&dist(&[("a", 3), ("b", 1)]), 5).unwrap();
        let s = b.sample(40_000);
        let a = s.iter().filter(|l| *l == "a").count() as f64 / s.len() as f64;
        assert!((a - 0.75).abs() < 0.01);
        assert!((b.label_probs.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
