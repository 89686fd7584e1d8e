//! Training loop and the two-phase schedule: binary branches first, then the
//! hybrid with the branches frozen.

use std::collections::HashMap;
use std::time::Instant;

use log::info;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::stats::{EpochAccumulator, EpochStats};
use crate::arch::{
    branch_prefix, build_hybrid, BranchConfig, FusionConfig, ForwardOptions, ModelConfig, ModelGraph,
    SequentialConfig,
};
use crate::autodiff::Tape;
use crate::data::{batch_indices, substream, ImageSet};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::labels::BranchTask;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Update branch weights during hybrid training instead of freezing them.
    #[serde(default)]
    pub fine_tune_branches: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            fine_tune_branches: false,
        }
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub loss: f64,
    pub predictions: Vec<usize>,
}

/// Owns a model and its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub graph: ModelGraph,
    pub adam: AdamState,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub frozen: Vec<String>,
}

impl Trainer {
    pub fn new(graph: ModelGraph, adam: AdamConfig, seed: u64) -> Result<Self> {
        adam.validate()?;
        Ok(Trainer {
            graph,
            adam: AdamState::new(adam),
            seed,
            epoch: 0,
            frozen: Vec::new(),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let adam = ck
            .adam
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no optimizer state".into()))?;
        Ok(Trainer {
            graph: ck.graph,
            adam,
            seed: ck.meta.seed,
            epoch: ck.meta.epoch,
            frozen: ck.meta.frozen,
        })
    }

    pub fn freeze(&mut self, prefix: &str) {
        self.graph.params_mut().set_frozen(prefix, true);
        if !self.frozen.iter().any(|p| p == prefix) {
            self.frozen.push(prefix.to_string());
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.graph.clone(),
            CheckpointMeta {
                epoch: self.epoch,
                seed: self.seed,
                classes: self.graph.classes(),
                frozen: self.frozen.clone(),
                optimizer: None,
            },
            Some(self.adam.clone()),
        )
    }

    /// Forward, fused softmax cross-entropy, backward, Adam update and
    /// moving-statistics update on one batch.
    pub fn step(&mut self, x: Tensor<f32>, labels: &[usize], branch_taps: Option<Tensor<f32>>) -> Result<StepResult> {
        let dropout_seed = substream(self.seed, 0x5_0000_0000 + self.adam.step).next_u64();
        let opts = ForwardOptions {
            branch_taps,
            ..ForwardOptions::train(dropout_seed)
        };
        let mut tape = Tape::new();
        let input = tape.constant(x);
        let out = self.graph.forward(&mut tape, input, &opts)?;
        let (loss, probs) = tape.softmax_cross_entropy(out.logits, labels)?;
        let loss_value = tape.value(loss).data()[0] as f64;
        let mut grads = tape.backward(loss)?;
        let mut named = HashMap::new();
        for (name, var) in &out.params {
            if tape.requires_grad(*var) {
                if let Some(g) = grads.take(*var) {
                    named.insert(name.clone(), g);
                }
            }
        }
        self.adam.step(self.graph.params_mut(), &named)?;
        self.graph.apply_bn_updates(&out.bn_updates)?;
        Ok(StepResult {
            loss: loss_value,
            predictions: probs.argmax_rows()?,
        })
    }

    /// One pass over `set` in the seeded order for the next epoch.
    pub fn run_epoch(&mut self, set: &ImageSet, batch_size: usize, cache: Option<&Tensor<f32>>) -> Result<EpochStats> {
        let start = Instant::now();
        let mut acc = EpochAccumulator::new(self.graph.classes());
        for idx in batch_indices(set.len(), batch_size, self.seed, self.epoch)? {
            let (x, labels) = set.batch(&idx)?;
            let taps = cache.map(|c| gather_rows(c, &idx)).transpose()?;
            let r = self.step(x, &labels, taps)?;
            acc.add_batch(r.loss, &labels, &r.predictions);
        }
        self.epoch += 1;
        acc.finish(self.epoch, start.elapsed().as_secs_f64())
    }
}

fn gather_rows(t: &Tensor<f32>, idx: &[usize]) -> Result<Tensor<f32>> {
    let row: usize = t.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(idx.len() * row);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * row..(i + 1) * row]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data)
}

/// Inference-mode merged branch maps of every image, computed once.
pub fn branch_tap_cache(graph: &ModelGraph, set: &ImageSet, batch: usize) -> Result<Tensor<f32>> {
    let mut parts = Vec::new();
    let all: Vec<usize> = (0..set.len()).collect();
    for idx in all.chunks(batch.max(1)) {
        let (x, _) = set.batch(idx)?;
        parts.push(graph.merged_branch_taps(&x)?);
    }
    let mut shape = parts
        .first()
        .ok_or_else(|| Error::Data("empty training set".into()))?
        .shape()
        .to_vec();
    shape[0] = set.len();
    Tensor::new(shape, parts.into_iter().flat_map(Tensor::into_data).collect())
}

/// Runs `epochs` epochs, reporting each through `on_epoch`.
pub fn fit(
    trainer: &mut Trainer,
    set: &ImageSet,
    cfg: &TrainConfig,
    validation: Option<&ImageSet>,
    cache: Option<&Tensor<f32>>,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut stats = trainer.run_epoch(set, cfg.batch_size, cache)?;
        if let Some(v) = validation.filter(|v| !v.is_empty()) {
            stats.val_accuracy = Some(evaluate(&trainer.graph, v, cfg.batch_size, &ForwardOptions::infer())?.metrics.accuracy);
        }
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Two-way subset of a four-class set for one branch, labels remapped.
pub fn branch_subset(set: &ImageSet, task: BranchTask) -> Result<ImageSet> {
    let sub = set.remap(|l| crate::labels::Label::from_index(l).and_then(|l| task.local_index(l)));
    for (local, label) in task.classes().iter().enumerate() {
        if !sub.labels.contains(&local) {
            return Err(Error::Data(format!(
                "{} branch has no {label} samples to train on",
                task.slug()
            )));
        }
    }
    Ok(sub)
}

/// Model-initialisation seed for component `tag` (0, 1 branches, 2 custom, 3 projection).
pub fn seed_for(seed: u64, tag: u64) -> u64 {
    substream(seed, 0x6_0000_0000 + tag).next_u64()
}

pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// Phase 1: trains each binary branch on its own class pair.
pub fn train_branches(
    set: &ImageSet,
    configs: [&BranchConfig; 2],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(BranchTask, &EpochStats),
) -> Result<[TrainedModel; 2]> {
    let mut out = Vec::with_capacity(2);
    for (i, task) in BranchTask::ALL.into_iter().enumerate() {
        let bc = configs[i];
        if bc.task != task {
            return Err(Error::Config(format!("branch {} configured for {:?}", task.slug(), bc.task)));
        }
        let subset = branch_subset(set, task)?;
        info!("training {} on {} images", task.slug(), subset.len());
        let graph = ModelGraph::new(ModelConfig::Branch(bc.clone()), seed_for(cfg.seed, i as u64))?;
        let mut trainer = Trainer::new(graph, cfg.adam, cfg.seed)?;
        let history = fit(&mut trainer, &subset, cfg, None, None, &mut |s| on_epoch(task, s))?;
        out.push(TrainedModel {
            checkpoint: trainer.checkpoint(),
            history,
        });
    }
    Ok(out.try_into().unwrap_or_else(|_| unreachable!("two branches")))
}

/// Phase 2: trains the custom network and projection around the branches.
#[allow(clippy::too_many_arguments)]
pub fn train_hybrid(
    set: &ImageSet,
    custom: &SequentialConfig,
    branch_ns: &ModelGraph,
    branch_ct: &ModelGraph,
    fusion: FusionConfig,
    cfg: &TrainConfig,
    validation: Option<&ImageSet>,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainedModel> {
    let custom_graph = ModelGraph::new(ModelConfig::Sequential(custom.clone()), seed_for(cfg.seed, 2))?;
    let hybrid = build_hybrid(&custom_graph, branch_ns, branch_ct, fusion, seed_for(cfg.seed, 3))?;
    let mut trainer = Trainer::new(hybrid, cfg.adam, cfg.seed)?;
    let cache = if cfg.fine_tune_branches {
        None
    } else {
        for task in BranchTask::ALL {
            trainer.freeze(&branch_prefix(task));
        }
        if cfg.epochs > 0 {
            Some(branch_tap_cache(&trainer.graph, set, cfg.batch_size)?)
        } else {
            None
        }
    };
    let history = fit(&mut trainer, set, cfg, validation, cache.as_ref(), on_epoch)?;
    Ok(TrainedModel {
        checkpoint: trainer.checkpoint(),
        history,
    })
}
