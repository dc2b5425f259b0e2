//! Exact and near-duplicate detection.
//!
//! Exact duplicates share a normalized text. Near duplicates are found over
//! the distinct normalized texts: word 3-shingles, 128 MinHash values per
//! text, LSH banding to propose candidates, and exact Jaccard to confirm
//! them. Bands are processed one at a time so signatures are never stored.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{clean, tokenize, TextLeakError};
use crate::model::{cmp_ids, Dataset};
use crate::rng::{derive_seed, mix64};
use crate::splits::{Partition, Split};

pub const NUM_HASHES: usize = 128;
const SHINGLE: usize = 3;
const MINHASH_SEED: u64 = 0x6d69_6e68_6173_6821;

/// Lowercased, URL-free text with runs of whitespace collapsed.
pub fn normalize(text: &str) -> String {
    clean(text).split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn hash_tokens(tokens: &[String]) -> u64 {
    fnv1a(tokens.iter().enumerate().flat_map(|(i, t)| {
        let sep = if i == 0 { None } else { Some(0x1f) };
        sep.into_iter().chain(t.bytes())
    }))
}

/// Sorted, distinct hashes of the word 3-shingles of `text`. A text with
/// one or two tokens is a single shingle; a text with none has no shingles.
pub fn shingles(text: &str) -> Vec<u64> {
    let tokens = tokenize(text);
    let mut out: Vec<u64> = if tokens.is_empty() {
        Vec::new()
    } else if tokens.len() < SHINGLE {
        vec![hash_tokens(&tokens)]
    } else {
        tokens.windows(SHINGLE).map(hash_tokens).collect()
    };
    out.sort_unstable();
    out.dedup();
    out
}

/// Jaccard similarity of two sorted, distinct hash lists.
pub fn jaccard_sorted(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// `(bands, rows)` with `bands * rows == NUM_HASHES`: the largest row count
/// whose candidate probability at Jaccard `threshold + 0.05` is at least
/// 0.999.
pub fn choose_bands(threshold: f64) -> (usize, usize) {
    let target = (threshold + 0.05).min(1.0);
    let mut best = (NUM_HASHES, 1);
    for rows in 1..=NUM_HASHES {
        if !NUM_HASHES.is_multiple_of(rows) {
            continue;
        }
        let bands = NUM_HASHES / rows;
        let p = 1.0 - (1.0 - target.powi(rows as i32)).powi(bands as i32);
        if p >= 0.999 {
            best = (bands, rows);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    Exact,
    Near,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub kind: ClusterKind,
    /// Numerically smallest member id.
    pub representative_id: String,
    /// Members in ascending id order.
    pub member_ids: Vec<String>,
    /// Smallest Jaccard over the verified links joining the cluster.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairwise_min_jaccard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateReport {
    pub threshold: f64,
    pub bands: usize,
    pub rows: usize,
    pub n_scanned: usize,
    /// Records whose normalized text is empty.
    pub skipped_empty: usize,
    /// Exact clusters first, then near clusters, each by representative id.
    pub clusters: Vec<DuplicateCluster>,
}

impl DuplicateReport {
    pub fn exact(&self) -> impl Iterator<Item = &DuplicateCluster> {
        self.clusters.iter().filter(|c| c.kind == ClusterKind::Exact)
    }

    pub fn near(&self) -> impl Iterator<Item = &DuplicateCluster> {
        self.clusters.iter().filter(|c| c.kind == ClusterKind::Near)
    }

    pub fn containing(&self, kind: ClusterKind, id: &str) -> Option<&DuplicateCluster> {
        self.clusters
            .iter()
            .find(|c| c.kind == kind && c.member_ids.iter().any(|m| m == id))
    }
}

/// Distinct normalized texts of a dataset and their shingles.
struct Corpus {
    /// Unique text of each record, `u32::MAX` when skipped.
    group_of: Vec<u32>,
    n_unique: usize,
    offsets: Vec<usize>,
    flat: Vec<u64>,
    skipped_empty: usize,
}

const NONE: u32 = u32::MAX;

impl Corpus {
    fn build(dataset: &Dataset) -> Self {
        let prepared: Vec<Option<(u64, Vec<u64>)>> = dataset
            .records()
            .par_iter()
            .map(|r| {
                let norm = normalize(&r.text);
                (!norm.is_empty()).then(|| (fnv1a(norm.bytes()), shingles(&norm)))
            })
            .collect();
        let mut group_of = vec![NONE; prepared.len()];
        let mut first: HashMap<u64, u32> = HashMap::new();
        // Fallback for distinct texts whose hashes collide.
        let mut collided: HashMap<String, u32> = HashMap::new();
        let mut rep_record: Vec<usize> = Vec::new();
        let mut offsets = vec![0];
        let mut flat = Vec::new();
        let mut skipped_empty = 0;
        for (i, p) in prepared.into_iter().enumerate() {
            let Some((h, sh)) = p else {
                skipped_empty += 1;
                continue;
            };
            let mut new_group = |sh: Vec<u64>, rep_record: &mut Vec<usize>| {
                rep_record.push(i);
                flat.extend_from_slice(&sh);
                offsets.push(flat.len());
                (rep_record.len() - 1) as u32
            };
            let g = match first.get(&h) {
                None => {
                    let g = new_group(sh, &mut rep_record);
                    first.insert(h, g);
                    g
                }
                Some(&g) => {
                    let text = &dataset.records()[i].text;
                    let rep_text = &dataset.records()[rep_record[g as usize]].text;
                    if text == rep_text || normalize(text) == normalize(rep_text) {
                        g
                    } else {
                        let norm = normalize(text);
                        match collided.get(&norm) {
                            Some(&g) => g,
                            None => {
                                let g = new_group(sh, &mut rep_record);
                                collided.insert(norm, g);
                                g
                            }
                        }
                    }
                }
            };
            group_of[i] = g;
        }
        Corpus {
            group_of,
            n_unique: rep_record.len(),
            offsets,
            flat,
            skipped_empty,
        }
    }

    fn shingles(&self, u: usize) -> &[u64] {
        &self.flat[self.offsets[u]..self.offsets[u + 1]]
    }

    fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_unique];
        for (i, &g) in self.group_of.iter().enumerate() {
            if g != NONE {
                m[g as usize].push(i);
            }
        }
        m
    }

    /// Call `visit(u, v)` for every pair of unique texts sharing an LSH
    /// bucket in some band (a pair may be visited more than once).
    fn for_each_candidate(&self, bands: usize, rows: usize, mut visit: impl FnMut(usize, usize)) {
        let seeds: Vec<u64> = (0..NUM_HASHES as u64)
            .map(|i| derive_seed(MINHASH_SEED, i))
            .collect();
        for b in 0..bands {
            let band_seeds = &seeds[b * rows..(b + 1) * rows];
            let mut keys: Vec<(u64, u32)> = (0..self.n_unique)
                .into_par_iter()
                .filter_map(|u| {
                    let sh = self.shingles(u);
                    if sh.is_empty() {
                        return None;
                    }
                    let key = band_seeds.iter().fold(b as u64, |acc, &s| {
                        let m = sh.iter().map(|&x| mix64(x ^ s)).min().expect("non-empty");
                        mix64(acc ^ m)
                    });
                    Some((key, u as u32))
                })
                .collect();
            keys.par_sort_unstable();
            let mut start = 0;
            while start < keys.len() {
                let mut end = start + 1;
                while end < keys.len() && keys[end].0 == keys[start].0 {
                    end += 1;
                }
                for i in start..end {
                    for j in i + 1..end {
                        visit(keys[i].1 as usize, keys[j].1 as usize);
                    }
                }
                start = end;
            }
        }
    }
}

struct UnionFind(Vec<u32>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n as u32).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] as usize != x {
            let parent = self.0[x] as usize;
            self.0[x] = self.0[parent];
            x = parent;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo as u32;
        }
    }
}

fn check_threshold(t: f64) -> Result<(), TextLeakError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(TextLeakError::Threshold(t))
    }
}

fn sorted_ids(dataset: &Dataset, records: impl IntoIterator<Item = usize>) -> Vec<String> {
    let mut ids: Vec<String> = records
        .into_iter()
        .map(|i| dataset.records()[i].id.clone())
        .collect();
    ids.sort_by(|a, b| cmp_ids(a, b));
    ids
}

/// Exact clusters (identical normalized text) and near clusters (connected
/// components of distinct texts linked by verified Jaccard >= threshold).
pub fn find_duplicates(dataset: &Dataset, threshold: f64) -> Result<DuplicateReport, TextLeakError> {
    check_threshold(threshold)?;
    let corpus = Corpus::build(dataset);
    let members = corpus.members();
    let (bands, rows) = choose_bands(threshold);

    let mut uf = UnionFind::new(corpus.n_unique);
    let mut edges: Vec<(usize, f64)> = Vec::new();
    corpus.for_each_candidate(bands, rows, |u, v| {
        if uf.find(u) == uf.find(v) {
            return;
        }
        let j = jaccard_sorted(corpus.shingles(u), corpus.shingles(v));
        if j >= threshold {
            uf.union(u, v);
            edges.push((u, j));
        }
    });

    let mut clusters: Vec<DuplicateCluster> = members
        .iter()
        .filter(|m| m.len() >= 2)
        .map(|m| {
            let ids = sorted_ids(dataset, m.iter().copied());
            DuplicateCluster {
                kind: ClusterKind::Exact,
                representative_id: ids[0].clone(),
                member_ids: ids,
                pairwise_min_jaccard: None,
            }
        })
        .collect();

    let mut min_j: HashMap<usize, f64> = HashMap::new();
    for (u, j) in edges {
        let root = uf.find(u);
        let e = min_j.entry(root).or_insert(j);
        *e = e.min(j);
    }
    let mut components: HashMap<usize, Vec<usize>> = HashMap::new();
    for u in 0..corpus.n_unique {
        let root = uf.find(u);
        if min_j.contains_key(&root) {
            components.entry(root).or_default().push(u);
        }
    }
    let mut near: Vec<DuplicateCluster> = components
        .into_iter()
        .map(|(root, us)| {
            let ids = sorted_ids(dataset, us.iter().flat_map(|&u| members[u].iter().copied()));
            DuplicateCluster {
                kind: ClusterKind::Near,
                representative_id: ids[0].clone(),
                member_ids: ids,
                pairwise_min_jaccard: Some(min_j[&root]),
            }
        })
        .collect();
    clusters.sort_by(|a, b| cmp_ids(&a.representative_id, &b.representative_id));
    near.sort_by(|a, b| cmp_ids(&a.representative_id, &b.representative_id));
    clusters.extend(near);

    Ok(DuplicateReport {
        threshold,
        bands,
        rows,
        n_scanned: dataset.len(),
        skipped_empty: corpus.skipped_empty,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationPair {
    pub train_id: String,
    pub other_id: String,
    pub other_partition: Partition,
    pub jaccard: f64,
}

/// Verified duplicate pairs between train and dev/test, most similar first.
pub fn cross_split_contamination(
    dataset: &Dataset,
    split: &Split,
    threshold: f64,
) -> Result<Vec<ContaminationPair>, TextLeakError> {
    check_threshold(threshold)?;
    let assignment = split.assignment();
    let part_of: Vec<Option<Partition>> = dataset
        .records()
        .iter()
        .map(|r| assignment.get(r.id.as_str()).copied())
        .collect();
    let corpus = Corpus::build(dataset);
    let members = corpus.members();
    let has = |u: usize, pred: &dyn Fn(Partition) -> bool| {
        members[u].iter().any(|&i| part_of[i].is_some_and(pred))
    };
    let is_train = |p: Partition| p == Partition::Train;
    let is_held = |p: Partition| p != Partition::Train;
    let train_side: Vec<bool> = (0..corpus.n_unique).map(|u| has(u, &is_train)).collect();
    let held_side: Vec<bool> = (0..corpus.n_unique).map(|u| has(u, &is_held)).collect();

    let mut linked: Vec<(usize, usize, f64)> = (0..corpus.n_unique)
        .filter(|&u| train_side[u] && held_side[u])
        .map(|u| (u, u, 1.0))
        .collect();
    let (bands, rows) = choose_bands(threshold);
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    corpus.for_each_candidate(bands, rows, |u, v| {
        let spans = (train_side[u] && held_side[v]) || (train_side[v] && held_side[u]);
        let key = (u.min(v) as u32, u.max(v) as u32);
        if !spans || !seen.insert(key) {
            return;
        }
        let j = jaccard_sorted(corpus.shingles(u), corpus.shingles(v));
        if j >= threshold {
            linked.push((u, v, j));
        }
    });

    let mut pairs = Vec::new();
    let mut emit = |a: usize, b: usize, j: f64| {
        for &i in &members[a] {
            if part_of[i] != Some(Partition::Train) {
                continue;
            }
            for &o in &members[b] {
                if let Some(p) = part_of[o].filter(|&p| p != Partition::Train) {
                    pairs.push(ContaminationPair {
                        train_id: dataset.records()[i].id.clone(),
                        other_id: dataset.records()[o].id.clone(),
                        other_partition: p,
                        jaccard: j,
                    });
                }
            }
        }
    };
    for (u, v, j) in linked {
        emit(u, v, j);
        if u != v {
            emit(v, u, j);
        }
    }
    pairs.sort_by(|a, b| {
        b.jaccard
            .total_cmp(&a.jaccard)
            .then_with(|| cmp_ids(&a.train_id, &b.train_id))
            .then_with(|| cmp_ids(&a.other_id, &b.other_id))
    });
    Ok(pairs)
}

pub fn clusters_to_csv(report: &DuplicateReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cluster_id", "kind", "representative_id", "member_id", "min_jaccard"])
        .expect("in-memory write");
    for (n, c) in report.clusters.iter().enumerate() {
        let kind = match c.kind {
            ClusterKind::Exact => "exact",
            ClusterKind::Near => "near",
        };
        let j = c.pairwise_min_jaccard.map(|j| format!("{j:.6}")).unwrap_or_default();
        for m in &c.member_ids {
            w.write_record([&n.to_string(), kind, &c.representative_id, m, &j])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn contamination_to_csv(pairs: &[ContaminationPair]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["train_id", "other_id", "other_partition", "jaccard"])
        .expect("in-memory write");
    for p in pairs {
        w.write_record([
            p.train_id.as_str(),
            &p.other_id,
            p.other_partition.name(),
            &format!("{:.6}", p.jaccard),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelSet, Record};
    use crate::splits::{Provenance, SplitSpec};

    fn ds(texts: &[&str]) -> Dataset {
        let ls = LabelSet::new(["x"]).unwrap();
        let recs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Record::new((i + 1).to_string(), *t, "x"))
            .collect();
        Dataset::new("d", ls, recs).unwrap()
    }

    fn words(n: usize, changed: Option<usize>) -> String {
        (0..n)
            .map(|i| if Some(i) == changed { "CHANGED".to_string() } else { format!("w{i}") })
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn band_choice_at_default_threshold() {
        assert_eq!(choose_bands(0.8), (32, 4));
        let (b, r) = choose_bands(0.5);
        assert_eq!(b * r, NUM_HASHES);
    }

    #[test]
    fn identical_texts_form_exact_cluster() {
        let d = ds(&["Same text here", "same   TEXT here https://t.co/a", "different entirely now"]);
        let rep = find_duplicates(&d, 0.8).unwrap();
        let exact: Vec<_> = rep.exact().collect();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact[0].member_ids, ["1", "2"]);
        assert_eq!(rep.near().count(), 0);
    }

    #[test]
    fn one_word_changed_in_thirty_is_near() {
        let a = words(30, None);
        let b = words(30, Some(15));
        // 28 shingles each; the changed word touches 3 of them
        let j = jaccard_sorted(&shingles(&a), &shingles(&b));
        assert!((j - 25.0 / 31.0).abs() < 1e-12);
        let rep = find_duplicates(&ds(&[&a, &b, "unrelated tweet"]), 0.8).unwrap();
        let near: Vec<_> = rep.near().collect();
        assert_eq!(near.len(), 1);
        assert_eq!(near[0].member_ids, ["1", "2"]);
        assert!((near[0].pairwise_min_jaccard.unwrap() - 25.0 / 31.0).abs() < 1e-12);
    }

    #[test]
    fn empty_texts_skipped_and_threshold_checked() {
        let rep = find_duplicates(&ds(&["", "  ", "http://x.y", "a"]), 0.8).unwrap();
        assert_eq!(rep.skipped_empty, 3);
        assert!(rep.clusters.is_empty());
        assert!(find_duplicates(&ds(&["a"]), 0.0).is_err());
        assert!(find_duplicates(&ds(&["a"]), 1.5).is_err());
    }

    fn split(train: &[&str], test: &[&str]) -> Split {
        Split {
            train: train.iter().map(|s| s.to_string()).collect(),
            dev: vec![],
            test: test.iter().map(|s| s.to_string()).collect(),
            spec: SplitSpec::default(),
            provenance: Provenance {
                toolkit_version: "t".into(),
                dataset: "d".into(),
                preset: None,
            },
            notes: vec![],
        }
    }

    #[test]
    fn contamination_only_across_partitions() {
        let near = words(30, Some(3));
        let d = ds(&["dup text one two", "dup text one two", "dup text one two", &words(30, None), &near, "solo"]);
        let pairs = cross_split_contamination(&d, &split(&["1", "2", "4"], &["3", "5", "6"]), 0.8).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].jaccard, 1.0);
        assert_eq!((pairs[0].train_id.as_str(), pairs[0].other_id.as_str()), ("1", "3"));
        assert_eq!((pairs[1].train_id.as_str(), pairs[1].other_id.as_str()), ("2", "3"));
        assert_eq!(pairs[2].other_id, "5");
        assert!(pairs[2].jaccard < 1.0);
        let none = cross_split_contamination(&d, &split(&["1", "2", "3"], &["6"]), 0.8).unwrap();
        assert!(none.is_empty());
    }
}
