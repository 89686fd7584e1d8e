//! Per-epoch training statistics and the JSONL training log.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{metrics, ConfusionMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Standard deviation of per-batch accuracy within the epoch.
    pub accuracy_std: f64,
    pub samples: usize,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
}

/// Accumulates batch results over one epoch.
#[derive(Debug, Clone)]
pub struct EpochAccumulator {
    loss_sum: f64,
    batch_acc: Vec<f64>,
    cm: ConfusionMatrix,
}

impl EpochAccumulator {
    pub fn new(classes: Vec<String>) -> Self {
        EpochAccumulator {
            loss_sum: 0.0,
            batch_acc: Vec::new(),
            cm: ConfusionMatrix::zeros(classes),
        }
    }

    pub fn add_batch(&mut self, loss: f64, labels: &[usize], preds: &[usize]) {
        let correct = labels.iter().zip(preds).filter(|(a, b)| a == b).count();
        self.batch_acc.push(correct as f64 / labels.len() as f64);
        self.loss_sum += loss * labels.len() as f64;
        for (&a, &p) in labels.iter().zip(preds) {
            self.cm.counts[a][p] += 1;
        }
    }

    pub fn finish(self, epoch: usize, seconds: f64) -> Result<EpochStats> {
        let samples = self.cm.total() as usize;
        let m = metrics(&self.cm)?;
        let nb = self.batch_acc.len() as f64;
        let mean = self.batch_acc.iter().sum::<f64>() / nb;
        let var = self.batch_acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / nb;
        Ok(EpochStats {
            epoch,
            loss: self.loss_sum / samples as f64,
            accuracy: m.accuracy,
            precision: m.macro_precision,
            recall: m.macro_recall,
            f1: m.macro_f1,
            accuracy_std: var.sqrt(),
            samples,
            seconds,
            val_accuracy: None,
        })
    }
}

/// Appends one JSON line per record, tagged with `phase`.
pub fn append_jsonl(path: &Path, phase: &str, stats: &EpochStats) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        phase: &'a str,
        #[serde(flatten)]
        stats: &'a EpochStats,
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(&Line { phase, stats })?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}
