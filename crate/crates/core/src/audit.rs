//! One-shot dataset audit: id-digit leakage, keyword shortcuts, duplicates
//! and split contamination, with a pass/fail gate on the leakage score.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idleak::{run_id_leak_suite, suite_splits, IdLeakError, SuiteOptions, SuiteReport, Verdict};
use crate::model::{label_distribution, Dataset};
use crate::splits::Split;
use crate::textleak::{
    cross_split_contamination, find_duplicates, keyword_label_table, scan_discriminative_tokens,
    ContaminationPair, DuplicateCluster, KeywordTable, MatchMode, TextLeakError, TokenStats,
};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    IdLeak(#[from] IdLeakError),
    #[error(transparent)]
    Text(#[from] TextLeakError),
    #[error("invalid options: {0}")]
    Options(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub suite: SuiteOptions,
    /// The gate fails when any k's median leakage score reaches this.
    pub fail_over: f64,
    pub min_df: usize,
    pub top_tokens: usize,
    pub keywords: Vec<String>,
    pub keyword_mode: MatchMode,
    pub jaccard_threshold: f64,
    /// Largest clusters and worst contamination pairs kept in the bundle.
    pub top_n: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            suite: SuiteOptions::default(),
            fail_over: 0.15,
            min_df: 5,
            top_tokens: 25,
            keywords: Vec::new(),
            keyword_mode: MatchMode::Token,
            jaccard_threshold: 0.8,
            top_n: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub name: String,
    pub n_records: usize,
    pub label_distribution: IndexMap<String, usize>,
    pub first_timestamp_ms: Option<i64>,
    pub last_timestamp_ms: Option<i64>,
    /// Records whose id does not decode to a posting time.
    pub undecodable_ids: usize,
}

pub fn fingerprint(dataset: &Dataset) -> Fingerprint {
    let ts: Vec<i64> = dataset.records().iter().filter_map(|r| r.timestamp_ms).collect();
    Fingerprint {
        name: dataset.name.clone(),
        n_records: dataset.len(),
        label_distribution: label_distribution(dataset),
        first_timestamp_ms: ts.iter().copied().min(),
        last_timestamp_ms: ts.iter().copied().max(),
        undecodable_ids: dataset.len() - ts.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSection {
    pub top_tokens: Vec<TokenStats>,
    /// Tokens (among those scanned) that never occur with some label.
    pub label_excluding: Vec<String>,
    pub keyword_table: Option<KeywordTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateSummary {
    pub threshold: f64,
    pub n_exact_clusters: usize,
    pub n_near_clusters: usize,
    pub records_in_exact_clusters: usize,
    pub skipped_empty: usize,
    pub largest: Vec<DuplicateCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSummary {
    pub pair_count: usize,
    pub worst: Vec<ContaminationPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub fail_over: f64,
    pub max_leakage: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub toolkit_version: String,
    pub options: AuditOptions,
    pub fingerprint: Fingerprint,
    pub id_leak: SuiteReport,
    pub keyword: KeywordSection,
    pub duplicates: DuplicateSummary,
    pub contamination: ContaminationSummary,
    pub gate: Gate,
}

impl AuditBundle {
    /// 0 when the gate passes, 2 when it fails.
    pub fn exit_code(&self) -> i32 {
        if self.gate.passed {
            0
        } else {
            2
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let fp = &self.fingerprint;
        let _ = writeln!(s, "dataset {} ({} records)", fp.name, fp.n_records);
        for (l, n) in &fp.label_distribution {
            let _ = writeln!(s, "  {l:<16} {n}");
        }
        let _ = writeln!(s, "id-digit leakage:");
        for k in &self.id_leak.per_k {
            let _ = writeln!(
                s,
                "  k={}  macro F1 {:.3} ± {:.3}  baseline {:.3}  leakage {:.3} (median)  verdict {}",
                k.k,
                k.macro_f1_mean,
                k.macro_f1_std,
                k.baseline_mean,
                k.leakage_median,
                k.verdict.name()
            );
        }
        let _ = writeln!(
            s,
            "label-excluding tokens: {} of {} scanned",
            self.keyword.label_excluding.len(),
            self.keyword.top_tokens.len()
        );
        let d = &self.duplicates;
        let _ = writeln!(
            s,
            "duplicates: {} exact clusters ({} records), {} near clusters",
            d.n_exact_clusters, d.records_in_exact_clusters, d.n_near_clusters
        );
        let _ = writeln!(
            s,
            "train/held-out duplicate pairs: {}",
            self.contamination.pair_count
        );
        let _ = writeln!(
            s,
            "gate: {} (max leakage {:.3}, fail over {:.3})",
            if self.gate.passed { "PASS" } else { "FAIL" },
            self.gate.max_leakage,
            self.gate.fail_over
        );
        s
    }

    pub fn worst_verdict(&self) -> Option<Verdict> {
        self.id_leak.per_k.iter().map(|k| k.verdict).max()
    }
}

/// Run every check. With `canonical`, leakage and contamination use that
/// split; otherwise the suite generates splits and contamination uses the
/// first of them.
pub fn run_audit(
    dataset: &Dataset,
    canonical: Option<&Split>,
    opts: &AuditOptions,
) -> Result<AuditBundle, AuditError> {
    if dataset.is_empty() {
        return Err(AuditError::EmptyDataset);
    }
    if !opts.suite.thresholds.is_ordered() {
        return Err(AuditError::Options("verdict thresholds must be non-decreasing".into()));
    }
    let id_leak = run_id_leak_suite(dataset, canonical, &opts.suite)?;

    let scanned = scan_discriminative_tokens(dataset, opts.min_df);
    let label_excluding = scanned
        .iter()
        .filter(|t| t.is_label_excluding())
        .map(|t| t.token.clone())
        .collect();
    let keyword_table = if opts.keywords.is_empty() {
        None
    } else {
        Some(keyword_label_table(dataset, &opts.keywords, opts.keyword_mode)?)
    };
    let keyword = KeywordSection {
        top_tokens: scanned.into_iter().take(opts.top_tokens).collect(),
        label_excluding,
        keyword_table,
    };

    let dups = find_duplicates(dataset, opts.jaccard_threshold)?;
    let mut largest: Vec<DuplicateCluster> = dups.clusters.clone();
    largest.sort_by_key(|c| std::cmp::Reverse(c.member_ids.len()));
    largest.truncate(opts.top_n);
    let duplicates = DuplicateSummary {
        threshold: dups.threshold,
        n_exact_clusters: dups.exact().count(),
        n_near_clusters: dups.near().count(),
        records_in_exact_clusters: dups.exact().map(|c| c.member_ids.len()).sum(),
        skipped_empty: dups.skipped_empty,
        largest,
    };

    let (splits, _) = suite_splits(dataset, canonical, &opts.suite)?;
    let pairs = cross_split_contamination(dataset, &splits[0], opts.jaccard_threshold)?;
    let contamination = ContaminationSummary {
        pair_count: pairs.len(),
        worst: pairs.into_iter().take(opts.top_n).collect(),
    };

    let max_leakage = id_leak
        .per_k
        .iter()
        .map(|k| k.leakage_median)
        .fold(0.0, f64::max);
    let gate = Gate {
        fail_over: opts.fail_over,
        max_leakage,
        passed: max_leakage < opts.fail_over,
    };
    Ok(AuditBundle {
        toolkit_version: crate::VERSION.to_string(),
        options: opts.clone(),
        fingerprint: fingerprint(dataset),
        id_leak,
        keyword,
        duplicates,
        contamination,
        gate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ForestConfig;
    use crate::synth::{permute_labels, EraFixture};

    fn fast() -> AuditOptions {
        AuditOptions {
            suite: SuiteOptions {
                k_list: vec![3],
                n_splits: 2,
                forest: ForestConfig {
                    n_trees: 30,
                    ..ForestConfig::default()
                },
                ..SuiteOptions::default()
            },
            ..AuditOptions::default()
        }
    }

    #[test]
    fn leaky_fixture_fails_gate() {
        let ds = EraFixture::default().generate(7);
        let b = run_audit(&ds, None, &fast()).unwrap();
        assert_eq!(b.exit_code(), 2);
        assert_eq!(b.worst_verdict(), Some(Verdict::Severe));
        assert_eq!(b.fingerprint.n_records, 2000);
        assert!(b.summary().contains("FAIL"));
    }

    #[test]
    fn permuted_control_passes_gate() {
        let ds = permute_labels(&EraFixture::default().generate(7), 8);
        let b = run_audit(&ds, None, &fast()).unwrap();
        assert_eq!(b.exit_code(), 0, "{}", b.summary());
    }
}
