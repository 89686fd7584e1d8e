//! Deterministic per-class augmentation plans.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{apply_transform, read_rgb, write_png};
use super::manifest::{Provenance, SampleRecord, Transform};
use super::substream;
use crate::error::{Error, Result};
use crate::labels::Label;

/// Ratio of records after augmentation to originals, kept exact as a
/// fraction. Serialized as a number (`3`) or a string (`"3918/1377"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Multiplier {
    pub num: u64,
    pub den: u64,
}

impl Multiplier {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num < den {
            return Err(Error::Config(format!(
                "augmentation multiplier {num}/{den} must be at least 1"
            )));
        }
        Ok(Multiplier { num, den })
    }

    pub fn whole(n: u64) -> Self {
        Multiplier { num: n.max(1), den: 1 }
    }

    /// `round(n * num / den)`, ties away from zero.
    pub fn target(self, n: usize) -> usize {
        ((n as u128 * self.num as u128 * 2 + self.den as u128) / (2 * self.den as u128)) as usize
    }
}

impl fmt::Display for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Multiplier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad multiplier `{s}` (expected N or A/B)"));
        match s.split_once('/') {
            Some((a, b)) => Multiplier::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => Multiplier::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

impl Serialize for Multiplier {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.den == 1 {
            s.serialize_u64(self.num)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Multiplier {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Multiplier::new(n, 1),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    /// Transform applied in each successive variant pass.
    pub transforms: Vec<Transform>,
    pub multiplier: Multiplier,
}

/// Per-class augmentation settings; classes not listed are left as is.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub classes: BTreeMap<Label, ClassPlan>,
}

const PRESET_TRANSFORMS: [Transform; 4] = [
    Transform::HorizontalFlip,
    Transform::Rotate30,
    Transform::MedianFilter,
    Transform::VerticalFlip,
];

impl AugmentationPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Grows the reference class sizes to their balanced targets
    /// (Normal 5,077→5,141, Stone 1,377→3,918, Cyst 3,709→11,127,
    /// Tumor 2,283→6,849) when applied to the original class sizes.
    pub fn balanced_preset() -> Self {
        let ratios = [
            (Label::Normal, 5_141, 5_077),
            (Label::Stone, 3_918, 1_377),
            (Label::Cyst, 3, 1),
            (Label::Tumor, 3, 1),
        ];
        let classes = ratios
            .into_iter()
            .map(|(label, num, den)| {
                (
                    label,
                    ClassPlan {
                        transforms: PRESET_TRANSFORMS.to_vec(),
                        multiplier: Multiplier { num, den },
                    },
                )
            })
            .collect();
        AugmentationPlan { classes }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// One variant to produce: `transform` applied to `records[source]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentJob {
    pub source: usize,
    pub transform: Transform,
    pub output: SampleRecord,
}

fn variant_path(out_dir: &Path, index: usize, source: &SampleRecord, t: Transform) -> PathBuf {
    let stem = source
        .path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    out_dir
        .join(source.label.name())
        .join(format!("{index:06}_{stem}_{}.png", t.slug()))
}

/// Lists the variants a plan produces. Pure in `(records, plan, seed)`.
///
/// Each class needs `target - n` variants. Pass `k` applies the class's
/// `k`-th transform to every original; the last pass may be partial, in which
/// case a seeded subset of originals is used (kept in manifest order).
pub fn plan_augmentation(
    records: &[SampleRecord],
    plan: &AugmentationPlan,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<AugmentJob>> {
    let mut jobs = Vec::new();
    for (&label, class_plan) in &plan.classes {
        let originals: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label && r.provenance == Provenance::Original)
            .map(|(i, _)| i)
            .collect();
        let n = originals.len();
        if n == 0 {
            continue;
        }
        let needed = class_plan.multiplier.target(n) - n;
        let passes = needed.div_ceil(n);
        if passes > class_plan.transforms.len() {
            return Err(Error::Config(format!(
                "{label} multiplier {} needs {passes} variant passes but only {} transforms are listed",
                class_plan.multiplier,
                class_plan.transforms.len()
            )));
        }
        for (pass, &t) in class_plan.transforms.iter().enumerate().take(passes) {
            let remaining = needed - pass * n;
            let chosen: Vec<usize> = if remaining >= n {
                originals.clone()
            } else {
                let mut rng = substream(seed, 0x100 + label.index() as u64);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                let mut pick: Vec<usize> = order[..remaining].to_vec();
                pick.sort_unstable();
                pick.into_iter().map(|i| originals[i]).collect()
            };
            for src in chosen {
                let source = &records[src];
                jobs.push(AugmentJob {
                    source: src,
                    transform: t,
                    output: SampleRecord {
                        path: variant_path(out_dir, src, source, t),
                        label,
                        split: source.split,
                        provenance: Provenance::Augmented(t),
                    },
                });
            }
        }
    }
    Ok(jobs)
}

/// Originals followed by the planned variants, in job order.
pub fn augmented_manifest(records: &[SampleRecord], jobs: &[AugmentJob]) -> Vec<SampleRecord> {
    records
        .iter()
        .cloned()
        .chain(jobs.iter().map(|j| j.output.clone()))
        .collect()
}

/// Writes every planned variant as PNG. Output is independent of `workers`.
pub fn execute_augmentation(records: &[SampleRecord], jobs: &[AugmentJob], workers: usize) -> Result<()> {
    let dirs: std::collections::BTreeSet<&Path> = jobs.iter().filter_map(|j| j.output.path.parent()).collect();
    for dir in dirs {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let run = || {
        jobs.par_iter().try_for_each(|job| {
            let img = read_rgb(&records[job.source].path)?;
            write_png(&apply_transform(&img, job.transform), &job.output.path)
        })
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Data(format!("cannot start worker pool: {e}")))?
        .install(run)
}

/// Plans, writes and returns the augmented manifest.
pub fn augment(
    records: &[SampleRecord],
    plan: &AugmentationPlan,
    seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<SampleRecord>> {
    let jobs = plan_augmentation(records, plan, seed, out_dir)?;
    execute_augmentation(records, &jobs, workers)?;
    Ok(augmented_manifest(records, &jobs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::class_counts;

    fn fake(counts: &[(Label, usize)]) -> Vec<SampleRecord> {
        counts
            .iter()
            .flat_map(|&(l, n)| (0..n).map(move |i| SampleRecord::new(format!("{l}/{i}.png"), l)))
            .collect()
    }

    #[test]
    fn multiplier_parsing() {
        assert_eq!("3".parse::<Multiplier>().unwrap(), Multiplier::whole(3));
        assert_eq!("3918/1377".parse::<Multiplier>().unwrap(), Multiplier { num: 3918, den: 1377 });
        assert!("1/2".parse::<Multiplier>().is_err());
        let plan = AugmentationPlan::balanced_preset();
        let back = AugmentationPlan::from_json(&serde_json::to_string(&plan).unwrap()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn cyst_triples() {
        let recs = fake(&[(Label::Cyst, 3_709)]);
        let jobs = plan_augmentation(&recs, &AugmentationPlan::balanced_preset(), 0, Path::new("o")).unwrap();
        assert_eq!(recs.len() + jobs.len(), 11_127);
    }

    #[test]
    fn empty_plan_changes_nothing() {
        let recs = fake(&[(Label::Normal, 10), (Label::Stone, 4)]);
        let jobs = plan_augmentation(&recs, &AugmentationPlan::empty(), 1, Path::new("o")).unwrap();
        assert!(jobs.is_empty());
        assert_eq!(class_counts(&augmented_manifest(&recs, &jobs)), class_counts(&recs));
    }

    #[test]
    fn plan_is_seeded_and_pure() {
        let recs = fake(&[(Label::Stone, 50)]);
        let mut plan = AugmentationPlan::empty();
        plan.classes.insert(
            Label::Stone,
            ClassPlan {
                transforms: vec![Transform::HorizontalFlip, Transform::Rotate30],
                multiplier: "27/10".parse().unwrap(),
            },
        );
        let a = plan_augmentation(&recs, &plan, 7, Path::new("o")).unwrap();
        assert_eq!(a, plan_augmentation(&recs, &plan, 7, Path::new("o")).unwrap());
        assert_eq!(a.len(), 85);
        let b = plan_augmentation(&recs, &plan, 8, Path::new("o")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn too_few_transforms_is_an_error() {
        let recs = fake(&[(Label::Tumor, 5)]);
        let mut plan = AugmentationPlan::empty();
        plan.classes.insert(
            Label::Tumor,
            ClassPlan {
                transforms: vec![Transform::HorizontalFlip],
                multiplier: Multiplier::whole(3),
            },
        );
        assert!(matches!(plan_augmentation(&recs, &plan, 0, Path::new("o")), Err(Error::Config(_))));
    }
}
