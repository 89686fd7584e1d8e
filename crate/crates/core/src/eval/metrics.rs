//! Confusion matrices and precision / recall / F1 / accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows = actual class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    /// Adds another matrix over the same classes.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Data("cannot merge confusion matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion(labels: &[usize], predictions: &[usize], classes: &[String]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Data(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let k = classes.len();
    let mut cm = ConfusionMatrix::zeros(classes.to_vec());
    for (i, (&a, &p)) in labels.iter().zip(predictions).enumerate() {
        if a >= k || p >= k {
            return Err(Error::Data(format!(
                "sample {i}: label {a} / prediction {p} outside 0..{k}"
            )));
        }
        cm.counts[a][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of samples whose actual class is this one.
    pub support: u64,
    /// True when the class was neither present nor predicted, so precision
    /// and recall are set to 0 by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Wall-clock seconds of the evaluation pass, when timed.
    pub eval_seconds: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest metrics per class plus unweighted macro averages.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("cannot compute metrics on an empty confusion matrix".into()));
    }
    let k = cm.k();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let actual: u64 = cm.counts[c].iter().sum();
            let predicted: u64 = (0..k).map(|r| cm.counts[r][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: cm.classes[c].clone(),
                precision,
                recall,
                f1,
                support: actual,
                degenerate: actual == 0 && predicted == 0,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(MetricsReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: cm.trace() as f64 / total as f64,
        per_class,
        eval_seconds: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn swapped_pair_is_anti_diagonal() {
        let cm = confusion(&[0, 1], &[1, 0], &names(2)).unwrap();
        assert_eq!(cm.counts, [[0, 1], [1, 0]]);
        assert!(confusion(&[0], &[0, 1], &names(2)).is_err());
        assert!(confusion(&[2], &[0], &names(2)).is_err());
    }

    #[test]
    fn perfect_predictions_score_one() {
        let y = [0, 1, 2, 3, 3, 1];
        let m = metrics(&confusion(&y, &y, &names(4)).unwrap()).unwrap();
        for v in [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn absent_class_is_flagged() {
        let m = metrics(&confusion(&[0, 1], &[0, 1], &names(3)).unwrap()).unwrap();
        assert!(m.per_class[2].degenerate);
        assert_eq!(m.per_class[2].precision, 0.0);
        assert!(metrics(&ConfusionMatrix::zeros(names(2))).is_err());
    }
}
