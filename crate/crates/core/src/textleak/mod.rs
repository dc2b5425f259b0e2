//! Text shortcuts: words whose mere presence predicts a label, and
//! duplicated text that lets a model memorize its way across a split.

mod dedup;

pub use dedup::{
    choose_bands, clusters_to_csv, contamination_to_csv, cross_split_contamination,
    find_duplicates, jaccard_sorted, normalize, shingles, ClusterKind, ContaminationPair,
    DuplicateCluster, DuplicateReport, NUM_HASHES,
};

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use indexmap::IndexMap;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextLeakError {
    #[error("no keywords given")]
    NoKeywords,
    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("jaccard threshold must be in (0, 1], got {0}")]
    Threshold(f64),
}

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:https?://|www\.)\S*").expect("valid regex"));

/// Lowercase and strip URLs.
pub(crate) fn clean(text: &str) -> String {
    URL.replace_all(&text.to_lowercase(), " ").into_owned()
}

/// Lowercased alphanumeric runs with URLs removed. `@` and `#` are not
/// alphanumeric, so mention and hashtag bodies survive as plain tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    clean(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// How a keyword is matched against a record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The keyword is one of the record's tokens.
    #[default]
    Token,
    /// The keyword occurs anywhere in the lowercased, URL-stripped text.
    Substring,
}

/// keyword -> label -> number of records containing it.
pub type KeywordTable = IndexMap<String, IndexMap<String, usize>>;

pub fn keyword_label_table(
    dataset: &Dataset,
    keywords: &[String],
    mode: MatchMode,
) -> Result<KeywordTable, TextLeakError> {
    if keywords.is_empty() {
        return Err(TextLeakError::NoKeywords);
    }
    let keys: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
    let mut table: KeywordTable = keys
        .iter()
        .map(|k| {
            let row = dataset
                .label_set()
                .labels()
                .iter()
                .map(|l| (l.clone(), 0))
                .collect();
            (k.clone(), row)
        })
        .collect();
    for r in dataset.records() {
        let hits: Vec<bool> = match mode {
            MatchMode::Token => {
                let tokens: HashSet<String> = tokenize(&r.text).into_iter().collect();
                keys.iter().map(|k| tokens.contains(k)).collect()
            }
            MatchMode::Substring => {
                let text = clean(&r.text);
                keys.iter().map(|k| text.contains(k.as_str())).collect()
            }
        };
        for (k, hit) in keys.iter().zip(hits) {
            if hit {
                if let Some(c) = table[k].get_mut(&r.label) {
                    *c += 1;
                }
            }
        }
    }
    Ok(table)
}

/// Per-token record counts by label.
pub struct DocFreq {
    pub labels: Vec<String>,
    /// Records per label.
    pub label_totals: Vec<usize>,
    pub tokens: HashMap<String, Vec<u32>>,
}

impl DocFreq {
    pub fn n_records(&self) -> usize {
        self.label_totals.iter().sum()
    }
}

fn merge(mut a: HashMap<String, Vec<u32>>, b: HashMap<String, Vec<u32>>) -> HashMap<String, Vec<u32>> {
    if a.len() < b.len() {
        return merge(b, a);
    }
    for (t, counts) in b {
        let e = a.entry(t).or_insert_with(|| vec![0; counts.len()]);
        for (x, y) in e.iter_mut().zip(counts) {
            *x += y;
        }
    }
    a
}

/// Count, for every token, the records of each label that contain it.
/// Records with labels outside the label set are ignored.
pub fn doc_frequencies(dataset: &Dataset) -> DocFreq {
    let n_labels = dataset.label_set().len();
    let labels = dataset.label_indices();
    let mut label_totals = vec![0; n_labels];
    for l in labels.iter().flatten() {
        label_totals[*l] += 1;
    }
    let tokens = dataset
        .records()
        .par_iter()
        .zip(labels.par_iter())
        .filter_map(|(r, l)| l.map(|l| (r, l)))
        .fold(HashMap::new, |mut acc: HashMap<String, Vec<u32>>, (r, l)| {
            let mut seen = HashSet::new();
            for t in tokenize(&r.text) {
                if seen.insert(t.clone()) {
                    acc.entry(t).or_insert_with(|| vec![0; n_labels])[l] += 1;
                }
            }
            acc
        })
        .reduce(HashMap::new, merge);
    DocFreq {
        labels: dataset.label_set().labels().to_vec(),
        label_totals,
        tokens,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub token: String,
    pub doc_freq: usize,
    pub per_label_counts: IndexMap<String, usize>,
    /// Smoothed one-vs-rest log-odds of the token for each label.
    pub log_odds: IndexMap<String, f64>,
    /// Labels with at least one record but no record containing the token.
    pub excluded_labels: Vec<String>,
}

impl TokenStats {
    pub fn max_abs_log_odds(&self) -> f64 {
        self.log_odds.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_label_excluding(&self) -> bool {
        !self.excluded_labels.is_empty()
    }
}

/// `ln(((a+.5)/(b+.5)) / ((c+.5)/(d+.5)))` for the table
/// `[[a, b], [c, d]]` = `[[label & token, label & no token], [rest & token, rest & no token]]`.
pub fn smoothed_log_odds(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let f = |x: usize| x as f64 + 0.5;
    (f(a) / f(b)).ln() - (f(c) / f(d)).ln()
}

fn stats_for(token: &str, counts: &[u32], df: &DocFreq) -> TokenStats {
    let n = df.n_records();
    let doc_freq: usize = counts.iter().map(|&c| c as usize).sum();
    let mut per_label_counts = IndexMap::new();
    let mut log_odds = IndexMap::new();
    let mut excluded_labels = Vec::new();
    for (i, label) in df.labels.iter().enumerate() {
        let a = counts[i] as usize;
        let n_l = df.label_totals[i];
        let b = n_l - a;
        let c = doc_freq - a;
        let d = (n - n_l) - c;
        per_label_counts.insert(label.clone(), a);
        log_odds.insert(label.clone(), smoothed_log_odds(a, b, c, d));
        if a == 0 && n_l > 0 {
            excluded_labels.push(label.clone());
        }
    }
    TokenStats {
        token: token.to_string(),
        doc_freq,
        per_label_counts,
        log_odds,
        excluded_labels,
    }
}

/// Tokens in at least `min_df` records, strongest label association first
/// (ties: higher doc_freq, then token).
pub fn scan_discriminative_tokens(dataset: &Dataset, min_df: usize) -> Vec<TokenStats> {
    let df = doc_frequencies(dataset);
    let mut out: Vec<(f64, TokenStats)> = df
        .tokens
        .iter()
        .filter(|(_, c)| c.iter().map(|&x| x as usize).sum::<usize>() >= min_df.max(1))
        .map(|(t, c)| {
            let s = stats_for(t, c, &df);
            (s.max_abs_log_odds(), s)
        })
        .collect();
    out.sort_by(|(sa, a), (sb, b)| {
        sb.total_cmp(sa)
            .then(b.doc_freq.cmp(&a.doc_freq))
            .then_with(|| a.token.cmp(&b.token))
    });
    out.into_iter().map(|(_, s)| s).collect()
}

pub fn token_stats_to_csv(stats: &[TokenStats], labels: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["token".to_string(), "doc_freq".to_string()];
    header.extend(labels.iter().map(|l| format!("count_{l}")));
    header.extend(labels.iter().map(|l| format!("log_odds_{l}")));
    header.push("excluded_labels".into());
    w.write_record(&header).expect("in-memory write");
    for s in stats {
        let mut row = vec![s.token.clone(), s.doc_freq.to_string()];
        row.extend(labels.iter().map(|l| s.per_label_counts.get(l).copied().unwrap_or(0).to_string()));
        row.extend(labels.iter().map(|l| format!("{:.6}", s.log_odds.get(l).copied().unwrap_or(0.0))));
        row.push(s.excluded_labels.join(";"));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub token: String,
    /// Records containing the token per 1000 records of the target label.
    pub freq_in_target: f64,
    /// The same rate over all other records.
    pub freq_in_rest: f64,
}

/// Plot data for target-vs-rest word association, tokens with doc_freq
/// at least `min_df`, sorted by token.
pub fn class_scatter_data(
    dataset: &Dataset,
    target_label: &str,
    min_df: usize,
) -> Result<Vec<ScatterRow>, TextLeakError> {
    let t = dataset
        .label_set()
        .index_of(target_label)
        .ok_or_else(|| TextLeakError::UnknownLabel(target_label.to_string()))?;
    let df = doc_frequencies(dataset);
    let n_target = df.label_totals[t];
    let n_rest = df.n_records() - n_target;
    let per_k = |x: usize, n: usize| if n == 0 { 0.0 } else { 1000.0 * x as f64 / n as f64 };
    let mut rows: Vec<ScatterRow> = df
        .tokens
        .iter()
        .filter_map(|(tok, c)| {
            let total: usize = c.iter().map(|&x| x as usize).sum();
            if total < min_df.max(1) {
                return None;
            }
            let in_target = c[t] as usize;
            Some(ScatterRow {
                token: tok.clone(),
                freq_in_target: per_k(in_target, n_target),
                freq_in_rest: per_k(total - in_target, n_rest),
            })
        })
        .collect();
    rows.sort_by(|a, b| a.token.cmp(&b.token));
    Ok(rows)
}

pub fn scatter_to_csv(rows: &[ScatterRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["token", "freq_in_target", "freq_in_rest"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.token.as_str(),
            &format!("{:.6}", r.freq_in_target),
            &format!("{:.6}", r.freq_in_rest),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelSet, Record};
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hillary Clinton & Trump!"), ["hillary", "clinton", "trump"]);
        assert_eq!(tokenize("see https://t.co/xyz #Trump"), ["see", "trump"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("@CNN: ÉCOLE www.x.com/a b2b"), ["cnn", "école", "b2b"]);
    }

    fn corpus() -> Dataset {
        let ls = LabelSet::new(["true", "false", "unverified", "non-rumor"]).unwrap();
        let mut recs = Vec::new();
        let mut id = 1u64;
        let mut push = |text: String, label: &str| {
            recs.push(Record::new(id.to_string(), text, label));
            id += 1;
        };
        for i in 0..20 {
            push(format!("steve jobs steve story words here {i}"), "false");
        }
        for l in ["true", "false", "unverified", "non-rumor"] {
            for i in 0..40 {
                let even = if i % 2 == 0 { "common" } else { "other" };
                push(format!("{even} words here {i}"), l);
            }
        }
        Dataset::new("c", ls, recs).unwrap()
    }

    #[test]
    fn extreme_token_ranks_first() {
        let ds = corpus();
        let stats = scan_discriminative_tokens(&ds, 5);
        let top = &stats[0];
        assert!(["steve", "jobs", "story"].contains(&top.token.as_str()));
        assert!(top.excluded_labels.contains(&"true".to_string()));
        let steve = stats.iter().find(|s| s.token == "steve").unwrap();
        assert_eq!(steve.doc_freq, 20);
        assert_eq!(steve.per_label_counts["false"], 20);
        assert_eq!(steve.per_label_counts.values().sum::<usize>(), steve.doc_freq);
    }

    #[test]
    fn balanced_token_has_zero_log_odds() {
        let ls = LabelSet::new(["a", "b"]).unwrap();
        let recs = (0..40)
            .map(|i| {
                let text = if i % 4 < 2 { "common x" } else { "y" };
                Record::new((i + 1).to_string(), text, if i % 2 == 0 { "a" } else { "b" })
            })
            .collect();
        let ds = Dataset::new("b", ls, recs).unwrap();
        let stats = scan_discriminative_tokens(&ds, 5);
        let s = stats.iter().find(|s| s.token == "common").unwrap();
        for v in s.log_odds.values() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn keyword_table_counts_records_not_occurrences() {
        let ls = LabelSet::new(["true", "false"]).unwrap();
        let ds = Dataset::new(
            "k",
            ls,
            vec![
                Record::new("1", "Clinton clinton CLINTON", "false"),
                Record::new("2", "Hillary Clinton's emails", "false"),
                Record::new("3", "nothing", "true"),
                Record::new("4", "clintonfoundation", "true"),
            ],
        )
        .unwrap();
        let kw = vec!["Clinton".to_string(), "absent".to_string()];
        let t = keyword_label_table(&ds, &kw, MatchMode::Token).unwrap();
        assert_eq!(t["clinton"]["false"], 2);
        assert_eq!(t["clinton"]["true"], 0);
        assert!(t["absent"].values().all(|&c| c == 0));
        let s = keyword_label_table(&ds, &kw, MatchMode::Substring).unwrap();
        assert_eq!(s["clinton"]["true"], 1);
        assert_eq!(keyword_label_table(&ds, &[], MatchMode::Token), Err(TextLeakError::NoKeywords));
    }

    #[test]
    fn scatter_rates() {
        let ds = corpus();
        let rows = class_scatter_data(&ds, "false", 1).unwrap();
        let steve = rows.iter().find(|r| r.token == "steve").unwrap();
        assert_eq!(steve.freq_in_rest, 0.0);
        assert!((steve.freq_in_target - 1000.0 * 20.0 / 60.0).abs() < 1e-9);
        let words = rows.iter().find(|r| r.token == "words").unwrap();
        assert!((words.freq_in_target - words.freq_in_rest).abs() < 1e-9);
        assert!(matches!(
            class_scatter_data(&ds, "satire", 1),
            Err(TextLeakError::UnknownLabel(_))
        ));
        let csv = scatter_to_csv(&rows);
        assert!(csv.starts_with("token,freq_in_target,freq_in_rest\n"));
    }

    proptest! {
        #[test]
        fn keyword_counts_ignore_order_and_repeats(
            texts in proptest::collection::vec((0usize..3, 0usize..4, 1usize..4), 1..30),
            seed in 0u64..100,
        ) {
            let ls = LabelSet::new(["a", "b"]).unwrap();
            let words = ["alpha", "beta", "gamma"];
            let mk = |rows: &[(usize, usize, usize)]| {
                let recs = rows
                    .iter()
                    .enumerate()
                    .map(|(i, &(w, l, rep))| {
                        let text = vec![words[w]; rep].join(" ");
                        Record::new((i + 1).to_string(), text, if l % 2 == 0 { "a" } else { "b" })
                    })
                    .collect();
                Dataset::new("p", ls.clone(), recs).unwrap()
            };
            let kw: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            let t1 = keyword_label_table(&mk(&texts), &kw, MatchMode::Token).unwrap();
            let mut shuffled = texts.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut crate::rng::seeded(seed));
            let single: Vec<_> = shuffled.iter().map(|&(w, l, _)| (w, l, 1)).collect();
            let t2 = keyword_label_table(&mk(&single), &kw, MatchMode::Token).unwrap();
            prop_assert_eq!(t1, t2);
        }
    }
}
