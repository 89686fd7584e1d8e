//! Batched inference: predictions, evaluation reports and feature taps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics, ConfusionMatrix, MetricsReport};
use super::pca::Matrix;
use crate::arch::{ForwardOptions, ModelGraph};
use crate::autodiff::Tape;
use crate::data::ImageSet;
use crate::error::{Error, Result};
use crate::ops::softmax_rows;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTap {
    /// Output of the second-to-last dense layer.
    #[default]
    PenultimateDense,
    /// Features leaving the intersect junction, flattened.
    FusionPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

fn batches(n: usize, batch: usize) -> Result<impl Iterator<Item = Vec<usize>>> {
    if batch == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok((0..n).step_by(batch).map(move |s| (s..(s + batch).min(n)).collect()))
}

/// Class probabilities for every image, in set order.
pub fn predict_probs(graph: &ModelGraph, set: &ImageSet, batch: usize, opts: &ForwardOptions) -> Result<Tensor<f32>> {
    let mut parts = Vec::new();
    for idx in batches(set.len(), batch)? {
        let (x, _) = set.batch(&idx)?;
        let mut tape = Tape::new();
        let input = tape.constant(x);
        let out = graph.forward(&mut tape, input, opts)?;
        parts.push(softmax_rows(tape.value(out.logits))?);
    }
    if parts.is_empty() {
        return Err(Error::Data("nothing to predict: the image set is empty".into()));
    }
    let k = parts[0].shape()[1];
    let data: Vec<f32> = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![set.len(), k], data)
}

/// Inference-mode evaluation with wall-clock timing of the whole pass.
pub fn evaluate(graph: &ModelGraph, set: &ImageSet, batch: usize, opts: &ForwardOptions) -> Result<EvalReport> {
    let start = Instant::now();
    let probs = predict_probs(graph, set, batch, opts)?;
    let preds = probs.argmax_rows()?;
    let elapsed = start.elapsed().as_secs_f64();
    let cm = confusion(&set.labels, &preds, &graph.classes())?;
    let mut m = metrics(&cm)?;
    m.eval_seconds = Some(elapsed);
    Ok(EvalReport {
        samples: set.len(),
        confusion: cm,
        metrics: m,
    })
}

/// Feature rows (set order) at `tap` and the matching labels.
pub fn extract_features(
    graph: &ModelGraph,
    set: &ImageSet,
    tap: FeatureTap,
    batch: usize,
) -> Result<(Matrix, Vec<usize>)> {
    let mut data = Vec::new();
    let mut cols = 0;
    for idx in batches(set.len(), batch)? {
        let (x, _) = set.batch(&idx)?;
        let mut tape = Tape::new();
        let input = tape.constant(x);
        let out = graph.forward(&mut tape, input, &ForwardOptions::infer())?;
        let var = match tap {
            FeatureTap::PenultimateDense => out.penultimate,
            FeatureTap::FusionPoint => out.fusion,
        }
        .ok_or_else(|| Error::Config(format!("graph has no {tap:?} feature tap")))?;
        let t = tape.value(var);
        cols = t.len() / idx.len();
        data.extend(t.data().iter().map(|&v| v as f64));
    }
    Ok((Matrix::new(set.len(), cols, data)?, set.labels.clone()))
}
