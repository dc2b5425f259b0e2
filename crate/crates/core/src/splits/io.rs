//! Split files: JSON `{train, dev, test, spec, provenance}` holding ids
//! only, plus plain one-id-per-line lists.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use super::{Partition, Provenance, Split, SplitError, SplitSpec};
use crate::model::Dataset;

/// Result of reading a split against a dataset: ids the dataset lacks are
/// dropped (hydration loss is expected) and listed here.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedSplit {
    pub split: Split,
    pub missing_ids: Vec<String>,
}

impl ImportedSplit {
    pub fn missing_count(&self) -> usize {
        self.missing_ids.len()
    }
}

pub fn split_to_json(split: &Split) -> String {
    let mut s = serde_json::to_string_pretty(split).expect("split serializes");
    s.push('\n');
    s
}

pub fn export_split(split: &Split, path: &Path) -> Result<(), SplitError> {
    std::fs::write(path, split_to_json(split)).map_err(|e| SplitError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Deserialize)]
struct SplitFile {
    #[serde(default)]
    train: Vec<IdValue>,
    #[serde(default)]
    dev: Vec<IdValue>,
    #[serde(default, alias = "valid", alias = "validation")]
    val_dev: Vec<IdValue>,
    #[serde(default)]
    test: Vec<IdValue>,
    #[serde(default)]
    spec: Option<SplitSpec>,
    #[serde(default)]
    provenance: Option<Provenance>,
    #[serde(default)]
    notes: Vec<String>,
}

/// Ids may be written as strings or as bare JSON integers.
#[derive(Deserialize)]
#[serde(untagged)]
enum IdValue {
    Str(String),
    Num(u64),
}

impl IdValue {
    fn into_string(self) -> String {
        match self {
            IdValue::Str(s) => s,
            IdValue::Num(n) => n.to_string(),
        }
    }
}

fn resolve(
    parts: [Vec<String>; 3],
    spec: SplitSpec,
    provenance: Provenance,
    notes: Vec<String>,
    dataset: &Dataset,
) -> ImportedSplit {
    let index = dataset.id_index();
    let mut missing = Vec::new();
    let mut seen = HashSet::new();
    let [train, dev, test] = parts.map(|ids| {
        ids.into_iter()
            .filter(|id| {
                if !index.contains_key(id.as_str()) {
                    missing.push(id.clone());
                    false
                } else {
                    seen.insert(id.clone())
                }
            })
            .collect::<Vec<_>>()
    });
    ImportedSplit {
        split: Split {
            train,
            dev,
            test,
            spec,
            provenance,
            notes,
        },
        missing_ids: missing,
    }
}

/// Read a JSON split file and keep the ids present in `dataset`.
pub fn import_split(path: &Path, dataset: &Dataset) -> Result<ImportedSplit, SplitError> {
    let text = std::fs::read_to_string(path).map_err(|e| SplitError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let file: SplitFile = serde_json::from_str(&text).map_err(|e| SplitError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let to_strings = |v: Vec<IdValue>| v.into_iter().map(IdValue::into_string).collect::<Vec<_>>();
    let mut dev = to_strings(file.dev);
    dev.extend(to_strings(file.val_dev));
    let provenance = file.provenance.unwrap_or_else(|| Provenance {
        toolkit_version: crate::VERSION.to_string(),
        dataset: dataset.name.clone(),
        preset: None,
    });
    Ok(resolve(
        [to_strings(file.train), dev, to_strings(file.test)],
        file.spec.unwrap_or_default(),
        provenance,
        file.notes,
        dataset,
    ))
}

/// Build a split from plain id lists (one id per line, blank lines and
/// `#` comments ignored). A missing `dev` list means an empty dev set.
pub fn import_id_lists(
    train: &Path,
    dev: Option<&Path>,
    test: &Path,
    dataset: &Dataset,
) -> Result<ImportedSplit, SplitError> {
    let read = |p: &Path| -> Result<Vec<String>, SplitError> {
        let text = std::fs::read_to_string(p).map_err(|e| SplitError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.split([',', '\t', ' ']).next().unwrap_or(l).to_string())
            .collect())
    };
    let parts = [
        read(train)?,
        dev.map(read).transpose()?.unwrap_or_default(),
        read(test)?,
    ];
    let provenance = Provenance {
        toolkit_version: crate::VERSION.to_string(),
        dataset: dataset.name.clone(),
        preset: None,
    };
    Ok(resolve(parts, SplitSpec::default(), provenance, Vec::new(), dataset))
}

impl Split {
    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        Partition::ALL
            .into_iter()
            .find(|&p| self.part(p).iter().any(|x| x == id))
    }
}
