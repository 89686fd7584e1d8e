//! Stratified train/test/validation assignment.

use rand::seq::SliceRandom;

use super::manifest::{SampleRecord, Split};
use super::substream;
use crate::error::{Error, Result};
use crate::labels::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub train_frac: f64,
    /// Share of the held-out part assigned to validation.
    pub val_frac_of_test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frac: 0.70,
            val_frac_of_test: 0.20,
        }
    }
}

/// Assigns every record to train, test or validation, stratified by class.
///
/// Per class: `round(train_frac * n)` go to train and `round(val_frac * rest)`
/// of the remainder to validation. Membership is a pure function of the
/// record order and `seed`.
pub fn split(records: &[SampleRecord], cfg: SplitConfig, seed: u64) -> Result<Vec<SampleRecord>> {
    for (name, f) in [("train fraction", cfg.train_frac), ("validation fraction", cfg.val_frac_of_test)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let mut out = records.to_vec();
    for label in Label::ALL {
        let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].label == label).collect();
        let n = idx.len();
        if n == 0 {
            continue;
        }
        if n < 3 {
            return Err(Error::Data(format!(
                "class {label} has {n} sample(s); at least 3 are needed to stratify"
            )));
        }
        let mut order = idx;
        order.shuffle(&mut substream(seed, 0x200 + label.index() as u64));
        let n_train = (cfg.train_frac * n as f64).round() as usize;
        let n_val = (cfg.val_frac_of_test * (n - n_train) as f64).round() as usize;
        for (k, &i) in order.iter().enumerate() {
            out[i].split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}
