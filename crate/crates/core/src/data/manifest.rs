//! JSONL sample manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
    #[default]
    Unassigned,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Test, Split::Validation, Split::Unassigned];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown split `{s}`")))
    }
}

/// Image transforms available to augmentation plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    HorizontalFlip,
    VerticalFlip,
    #[serde(rename = "rotate30")]
    Rotate30,
    MedianFilter,
}

impl Transform {
    pub fn slug(self) -> &'static str {
        match self {
            Transform::HorizontalFlip => "hflip",
            Transform::VerticalFlip => "vflip",
            Transform::Rotate30 => "rot30",
            Transform::MedianFilter => "median",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Provenance {
    #[default]
    Original,
    Augmented(Transform),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
    pub provenance: Provenance,
}

impl SampleRecord {
    pub fn new(path: impl Into<PathBuf>, label: Label) -> Self {
        SampleRecord {
            path: path.into(),
            label,
            split: Split::Unassigned,
            provenance: Provenance::Original,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    path: String,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    augmented: Option<Transform>,
}

/// Parses manifest text. Relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, source: &Path, base: &Path) -> Result<Vec<SampleRecord>> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |msg: String| Error::Manifest {
            path: source.to_path_buf(),
            line: i + 1,
            msg,
        };
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let label = line.label.parse::<Label>().map_err(|e| err(e.to_string()))?;
        let split = match &line.split {
            Some(s) => s.parse::<Split>().map_err(|e| err(e.to_string()))?,
            None => Split::Unassigned,
        };
        let path = PathBuf::from(&line.path);
        records.push(SampleRecord {
            path: if path.is_absolute() { path } else { base.join(path) },
            label,
            split,
            provenance: line.augmented.map_or(Provenance::Original, Provenance::Augmented),
        });
    }
    Ok(records)
}

pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, path, base)
}

/// Serializes records as JSONL; paths under `base` are written relative to it.
pub fn manifest_text(records: &[SampleRecord], base: &Path) -> String {
    let mut out = String::new();
    for r in records {
        let rel = r.path.strip_prefix(base).unwrap_or(&r.path);
        let line = Line {
            path: rel.to_string_lossy().replace('\\', "/"),
            label: r.label.name().to_string(),
            split: (r.split != Split::Unassigned).then(|| r.split.name().to_string()),
            augmented: match r.provenance {
                Provenance::Original => None,
                Provenance::Augmented(t) => Some(t),
            },
        };
        out.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
        out.push('\n');
    }
    out
}

/// Writes a manifest with paths relative to the manifest's directory.
pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    std::fs::write(path, manifest_text(records, base)).map_err(|e| Error::io(path, e))
}

/// Per-class record counts, in class-index order.
pub fn class_counts(records: &[SampleRecord]) -> BTreeMap<Label, usize> {
    let mut counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    for r in records {
        *counts.entry(r.label).or_default() += 1;
    }
    counts
}

pub fn with_split(records: &[SampleRecord], split: Split) -> Vec<SampleRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}
