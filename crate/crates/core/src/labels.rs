use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kidney CT class. The discriminant is the class index used by the
/// four-way classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal = 0,
    Stone = 1,
    Cyst = 2,
    Tumor = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Normal, Label::Stone, Label::Cyst, Label::Tumor];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Normal => "Normal",
            Label::Stone => "Stone",
            Label::Cyst => "Cyst",
            Label::Tumor => "Tumor",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|l| l.name().to_string()).collect()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Exact, case-sensitive match on the four class names.
    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown label `{s}` (expected Normal, Stone, Cyst or Tumor)")))
    }
}

/// The two binary sub-tasks handled by the residual branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTask {
    NormalVsStone,
    CystVsTumor,
}

impl BranchTask {
    pub const ALL: [BranchTask; 2] = [BranchTask::NormalVsStone, BranchTask::CystVsTumor];

    /// Classes in branch-label order: the first maps to 0, the second to 1.
    pub fn classes(self) -> [Label; 2] {
        match self {
            BranchTask::NormalVsStone => [Label::Normal, Label::Stone],
            BranchTask::CystVsTumor => [Label::Cyst, Label::Tumor],
        }
    }

    pub fn local_index(self, label: Label) -> Option<usize> {
        self.classes().iter().position(|&l| l == label)
    }

    pub fn slug(self) -> &'static str {
        match self {
            BranchTask::NormalVsStone => "branch_ns",
            BranchTask::CystVsTumor => "branch_ct",
        }
    }
}
