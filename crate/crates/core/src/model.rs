//! Records, label sets, datasets, and their on-disk formats.
//!
//! A dataset file is JSONL (one object per line) or CSV with a header row.
//! Column names are mapped onto record fields through a [`Manifest`], so
//! heterogeneous corpora can be read without reshaping them first. Columns
//! the manifest does not map are kept verbatim in [`Record::extra`].

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::snowflake;

/// Largest id accepted by [`validate`] (`2^63 - 1`).
pub const MAX_ID: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("id is empty")]
    Empty,
    #[error("id {0:?} contains a non-digit character")]
    NonDigit(String),
    #[error("id {0:?} has a leading zero")]
    LeadingZero(String),
    #[error("id {0:?} does not fit in 64 bits")]
    Overflow(String),
}

/// Parse a canonical decimal id (digits only, no leading zeros).
pub fn parse_id(id: &str) -> Result<u64, IdError> {
    if id.is_empty() {
        return Err(IdError::Empty);
    }
    if !id.bytes().all(|b| b.is_ascii_digit()) {
        return Err(IdError::NonDigit(id.to_string()));
    }
    if id.len() > 1 && id.starts_with('0') {
        return Err(IdError::LeadingZero(id.to_string()));
    }
    id.parse::<u64>()
        .map_err(|_| IdError::Overflow(id.to_string()))
}

/// Numeric comparison of two canonical decimal ids without parsing.
pub fn cmp_ids(a: &str, b: &str) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// One labeled item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub event: Option<String>,
    #[serde(default)]
    pub article_id: Option<String>,
    #[serde(default)]
    pub reply_count: Option<i64>,
    /// Posting time decoded from the id; filled in by [`Dataset`] constructors.
    #[serde(skip)]
    pub timestamp_ms: Option<i64>,
    /// Unmapped source fields, in source order.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub extra: IndexMap<String, Value>,
}

impl Record {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            event: None,
            article_id: None,
            reply_count: None,
            timestamp_ms: None,
            extra: IndexMap::new(),
        }
    }

    pub fn with_event(mut self, event: impl Into<String>) -> Self {
        self.event = Some(event.into());
        self
    }

    pub fn with_article(mut self, article_id: impl Into<String>) -> Self {
        self.article_id = Some(article_id.into());
        self
    }

    pub fn with_replies(mut self, replies: i64) -> Self {
        self.reply_count = Some(replies);
        self
    }

    /// Value of a named field: one of the built-in fields, or an extra field.
    /// Non-string extra values are rendered as JSON.
    pub fn field(&self, name: &str) -> Option<String> {
        match name {
            "id" => Some(self.id.clone()),
            "text" => Some(self.text.clone()),
            "label" => Some(self.label.clone()),
            "event" => self.event.clone(),
            "article_id" => self.article_id.clone(),
            "reply_count" => self.reply_count.map(|n| n.to_string()),
            other => match self.extra.get(other)? {
                Value::Null => None,
                Value::String(s) => Some(s.clone()),
                v => Some(v.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelSetError {
    #[error("label set is empty")]
    Empty,
    #[error("label {0:?} appears twice")]
    Duplicate(String),
}

/// Ordered, duplicate-free label vocabulary. The order is the tie-break
/// order used by every vote and argmax in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, LabelSetError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(LabelSetError::Empty);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(LabelSetError::Duplicate(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn get(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Subset in this set's order. Labels not in `self` are ignored.
    pub fn restrict(&self, keep: &[String]) -> Result<Self, LabelSetError> {
        Self::new(self.labels.iter().filter(|l| keep.contains(l)).cloned())
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = LabelSetError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.labels
    }
}

/// Names of the source columns that feed each record field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: String,
    pub text: String,
    pub label: String,
    pub event: String,
    pub article_id: String,
    pub reply_count: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "text".into(),
            label: "label".into(),
            event: "event".into(),
            article_id: "article_id".into(),
            reply_count: "reply_count".into(),
        }
    }
}

impl FieldMap {
    fn mapped(&self) -> [&str; 6] {
        [
            &self.id,
            &self.text,
            &self.label,
            &self.event,
            &self.article_id,
            &self.reply_count,
        ]
    }
}

/// Sidecar description of a dataset file.
///
/// When `labels` is absent the label set is inferred from the file in order
/// of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub name: Option<String>,
    pub labels: Option<Vec<String>>,
    pub fields: FieldMap,
    pub source_notes: String,
}

impl Manifest {
    pub fn with_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        Self {
            labels: Some(labels.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LoadError::Manifest(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: missing required field {field:?}")]
    MissingField { line: u64, field: String },
    #[error("line {line}: {source}")]
    UnparseableId { line: u64, source: IdError },
    #[error("line {line}: duplicate id {id} (first seen on line {first_line})")]
    DuplicateId { line: u64, id: String, first_line: u64 },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: u64, label: String },
    #[error("line {line}: record {id} violates {rule}")]
    Invalid { line: u64, id: String, rule: Rule },
    #[error("unsupported dataset extension for {0}; expected .jsonl, .json or .csv")]
    UnknownFormat(PathBuf),
}

impl LoadError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Integrity rule checked by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    IdUnparseable,
    IdOutOfRange,
    DuplicateId,
    UnknownLabel,
    NegativeReplyCount,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::IdUnparseable => "id_unparseable",
            Rule::IdOutOfRange => "id_out_of_range",
            Rule::DuplicateId => "duplicate_id",
            Rule::UnknownLabel => "unknown_label",
            Rule::NegativeReplyCount => "negative_reply_count",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record_id: String,
    pub rule: Rule,
}

/// Immutable collection of records over a label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    label_set: LabelSet,
    pub name: String,
    pub source_notes: String,
}

impl Dataset {
    /// Build a dataset, rejecting it if [`validate`] finds anything.
    pub fn new(
        name: impl Into<String>,
        label_set: LabelSet,
        records: Vec<Record>,
    ) -> Result<Self, Vec<Violation>> {
        let ds = Self::new_unchecked(name, label_set, records);
        let violations = validate(&ds);
        if violations.is_empty() {
            Ok(ds)
        } else {
            Err(violations)
        }
    }

    /// Build without checking invariants. Timestamps are still derived.
    pub fn new_unchecked(
        name: impl Into<String>,
        label_set: LabelSet,
        mut records: Vec<Record>,
    ) -> Self {
        for r in &mut records {
            r.timestamp_ms = snowflake::decode_timestamp(&r.id).ok();
        }
        Self {
            records,
            label_set,
            name: name.into(),
            source_notes: String::new(),
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// Same name and notes, different contents.
    pub fn derive(&self, label_set: LabelSet, records: Vec<Record>) -> Self {
        let mut ds = Self::new_unchecked(self.name.clone(), label_set, records);
        ds.source_notes = self.source_notes.clone();
        ds
    }

    /// Map from id to record position.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }

    /// Label of each record as an index into the label set.
    /// Records with labels outside the set map to `None`.
    pub fn label_indices(&self) -> Vec<Option<usize>> {
        self.records
            .iter()
            .map(|r| self.label_set.index_of(&r.label))
            .collect()
    }
}

/// Check every record and dataset invariant. Never fails; an empty result
/// means the dataset is valid.
pub fn validate(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(dataset.len());
    for r in dataset.records() {
        let mut push = |rule| {
            out.push(Violation {
                record_id: r.id.clone(),
                rule,
            })
        };
        match parse_id(&r.id) {
            Ok(v) if v == 0 || v > MAX_ID => push(Rule::IdOutOfRange),
            Ok(_) => {}
            Err(_) => push(Rule::IdUnparseable),
        }
        if seen.insert(&r.id, ()).is_some() {
            push(Rule::DuplicateId);
        }
        if !dataset.label_set().contains(&r.label) {
            push(Rule::UnknownLabel);
        }
        if matches!(r.reply_count, Some(n) if n < 0) {
            push(Rule::NegativeReplyCount);
        }
    }
    out
}

/// Record count per label, in label-set order (zero counts included).
pub fn label_distribution(dataset: &Dataset) -> IndexMap<String, usize> {
    let mut counts: IndexMap<String, usize> = dataset
        .label_set()
        .labels()
        .iter()
        .map(|l| (l.clone(), 0))
        .collect();
    for r in dataset.records() {
        if let Some(c) = counts.get_mut(&r.label) {
            *c += 1;
        }
    }
    counts
}

/// Load by extension: `.jsonl`/`.json` or `.csv`.
pub fn load(path: &Path, manifest: &Manifest) -> Result<Dataset, LoadError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") | Some("ndjson") => load_jsonl(path, manifest),
        Some("csv") => load_csv(path, manifest),
        _ => Err(LoadError::UnknownFormat(path.to_path_buf())),
    }
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<(), LoadError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") | Some("ndjson") => save_jsonl(dataset, path),
        Some("csv") => save_csv(dataset, path),
        _ => Err(LoadError::UnknownFormat(path.to_path_buf())),
    }
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Accumulates records line by line and enforces the load-time contract.
struct Builder<'m> {
    manifest: &'m Manifest,
    records: Vec<Record>,
    first_line: HashMap<String, u64>,
    inferred: Vec<String>,
}

impl<'m> Builder<'m> {
    fn new(manifest: &'m Manifest) -> Self {
        Self {
            manifest,
            records: Vec::new(),
            first_line: HashMap::new(),
            inferred: Vec::new(),
        }
    }

    fn push(&mut self, line: u64, record: Record) -> Result<(), LoadError> {
        let value = parse_id(&record.id).map_err(|source| LoadError::UnparseableId { line, source })?;
        if let Some(&first_line) = self.first_line.get(&record.id) {
            return Err(LoadError::DuplicateId {
                line,
                id: record.id,
                first_line,
            });
        }
        match &self.manifest.labels {
            Some(labels) => {
                if !labels.contains(&record.label) {
                    return Err(LoadError::UnknownLabel {
                        line,
                        label: record.label,
                    });
                }
            }
            None => {
                if !self.inferred.contains(&record.label) {
                    self.inferred.push(record.label.clone());
                }
            }
        }
        let rule = if value == 0 || value > MAX_ID {
            Some(Rule::IdOutOfRange)
        } else if matches!(record.reply_count, Some(n) if n < 0) {
            Some(Rule::NegativeReplyCount)
        } else {
            None
        };
        if let Some(rule) = rule {
            return Err(LoadError::Invalid {
                line,
                id: record.id,
                rule,
            });
        }
        self.first_line.insert(record.id.clone(), line);
        self.records.push(record);
        Ok(())
    }

    fn finish(self, path: &Path) -> Result<Dataset, LoadError> {
        let labels = match &self.manifest.labels {
            Some(l) => l.clone(),
            None if self.inferred.is_empty() => {
                return Err(LoadError::Schema(
                    "no labels in manifest and none found in file".into(),
                ))
            }
            None => self.inferred,
        };
        let label_set = LabelSet::new(labels).map_err(|e| LoadError::Manifest(e.to_string()))?;
        let name = self.manifest.name.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let mut ds = Dataset::new_unchecked(name, label_set, self.records);
        ds.source_notes = self.manifest.source_notes.clone();
        Ok(ds)
    }
}

/// Load a JSONL dataset; records keep file order. Blank lines are skipped.
pub fn load_jsonl(path: &Path, manifest: &Manifest) -> Result<Dataset, LoadError> {
    let file = File::open(path).map_err(|e| LoadError::io(path, e))?;
    let reader = BufReader::new(file);
    let fields = &manifest.fields;
    let mut builder = Builder::new(manifest);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| LoadError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| LoadError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(mut obj) = value else {
            return Err(LoadError::Malformed {
                line: line_no,
                message: "record is not a JSON object".into(),
            });
        };
        let record = record_from_object(&mut obj, fields, line_no)?;
        builder.push(line_no, record)?;
    }
    builder.finish(path)
}

fn record_from_object(
    obj: &mut Map<String, Value>,
    fields: &FieldMap,
    line: u64,
) -> Result<Record, LoadError> {
    let required = |obj: &Map<String, Value>, key: &str| -> Result<String, LoadError> {
        match obj.get(key) {
            None | Some(Value::Null) => Err(LoadError::MissingField {
                line,
                field: key.to_string(),
            }),
            Some(v) => scalar_string(v).ok_or_else(|| LoadError::Malformed {
                line,
                message: format!("field {key:?} must be a string or number"),
            }),
        }
    };
    let optional = |obj: &Map<String, Value>, key: &str| -> Result<Option<String>, LoadError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => scalar_string(v).map(Some).ok_or_else(|| LoadError::Malformed {
                line,
                message: format!("field {key:?} must be a string or number"),
            }),
        }
    };
    let id = required(obj, &fields.id)?;
    let text = match obj.get(&fields.text) {
        None | Some(Value::Null) => {
            return Err(LoadError::MissingField {
                line,
                field: fields.text.clone(),
            })
        }
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(LoadError::Malformed {
                line,
                message: format!("field {:?} must be a string", fields.text),
            })
        }
    };
    let label = required(obj, &fields.label)?;
    let event = optional(obj, &fields.event)?;
    let article_id = optional(obj, &fields.article_id)?;
    let reply_count = match obj.get(&fields.reply_count) {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) if n.as_i64().is_some() => n.as_i64(),
        Some(_) => {
            return Err(LoadError::Malformed {
                line,
                message: format!("field {:?} must be an integer", fields.reply_count),
            })
        }
    };
    let mapped = fields.mapped();
    let extra = std::mem::take(obj)
        .into_iter()
        .filter(|(k, _)| !mapped.contains(&k.as_str()))
        .collect();
    Ok(Record {
        id,
        text,
        label,
        event,
        article_id,
        reply_count,
        timestamp_ms: None,
        extra,
    })
}

/// Load a CSV dataset (RFC 4180, header row required).
pub fn load_csv(path: &Path, manifest: &Manifest) -> Result<Dataset, LoadError> {
    let file = File::open(path).map_err(|e| LoadError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| LoadError::Schema(e.to_string()))?
        .clone();
    let fields = &manifest.fields;
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        col(name).ok_or_else(|| LoadError::Schema(format!("missing required column {name:?}")))
    };
    let id_col = require(&fields.id)?;
    let text_col = require(&fields.text)?;
    let label_col = require(&fields.label)?;
    let event_col = col(&fields.event);
    let article_col = col(&fields.article_id);
    let reply_col = col(&fields.reply_count);
    let mapped = fields.mapped();
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !mapped.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut builder = Builder::new(manifest);
    for row in reader.records() {
        let row = row.map_err(|e| LoadError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| row.get(i).unwrap_or("");
        let opt = |c: Option<usize>| c.map(cell).filter(|s| !s.is_empty()).map(str::to_string);
        let reply_count = match opt(reply_col) {
            None => None,
            Some(s) => Some(s.trim().parse::<i64>().map_err(|_| LoadError::Malformed {
                line,
                message: format!("{:?} is not an integer reply count", s),
            })?),
        };
        let record = Record {
            id: cell(id_col).to_string(),
            text: cell(text_col).to_string(),
            label: cell(label_col).to_string(),
            event: opt(event_col),
            article_id: opt(article_col),
            reply_count,
            timestamp_ms: None,
            extra: extra_cols
                .iter()
                .map(|(i, h)| (h.clone(), Value::String(cell(*i).to_string())))
                .collect(),
        };
        builder.push(line, record)?;
    }
    builder.finish(path)
}

fn create(path: &Path) -> Result<BufWriter<File>, LoadError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LoadError::io(path, e))
}

/// Write records as JSONL using the default field names.
pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<(), LoadError> {
    let mut out = create(path)?;
    for r in dataset.records() {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(r.id.clone()));
        obj.insert("text".into(), Value::String(r.text.clone()));
        obj.insert("label".into(), Value::String(r.label.clone()));
        obj.insert("event".into(), r.event.clone().map_or(Value::Null, Value::String));
        obj.insert(
            "article_id".into(),
            r.article_id.clone().map_or(Value::Null, Value::String),
        );
        obj.insert("reply_count".into(), r.reply_count.map_or(Value::Null, Value::from));
        for (k, v) in &r.extra {
            obj.insert(k.clone(), v.clone());
        }
        serde_json::to_writer(&mut out, &Value::Object(obj))
            .map_err(|e| LoadError::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| LoadError::io(path, e))?;
    }
    out.flush().map_err(|e| LoadError::io(path, e))
}

/// Write records as CSV. Extra fields become trailing columns in order of
/// first appearance; missing values are empty cells.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), LoadError> {
    let out = create(path)?;
    let mut extra_keys: Vec<&str> = Vec::new();
    for r in dataset.records() {
        for k in r.extra.keys() {
            if !extra_keys.contains(&k.as_str()) {
                extra_keys.push(k);
            }
        }
    }
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| LoadError::io(path, std::io::Error::other(e));
    let mut header = vec!["id", "text", "label", "event", "article_id", "reply_count"];
    header.extend(extra_keys.iter().copied());
    writer.write_record(&header).map_err(csv_err)?;
    for r in dataset.records() {
        let mut row = vec![
            r.id.clone(),
            r.text.clone(),
            r.label.clone(),
            r.event.clone().unwrap_or_default(),
            r.article_id.clone().unwrap_or_default(),
            r.reply_count.map(|n| n.to_string()).unwrap_or_default(),
        ];
        for k in &extra_keys {
            row.push(match r.extra.get(*k) {
                None | Some(Value::Null) => String::new(),
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
            });
        }
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| LoadError::io(path, e))
}
