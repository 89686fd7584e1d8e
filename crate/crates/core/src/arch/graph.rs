//! Model graphs: the serializable configuration, symbolic summary, parameter
//! storage and the taped forward pass.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::branch::BranchConfig;
use super::custom::SequentialConfig;
use super::hybrid::{branch_prefix, HybridConfig, MergeRule, CUSTOM_PREFIX, PROJECTION_PREFIX};
use super::layer::{
    conv_params, count_params, layer_names, residual_parts, shape_pass, LayerKind, LayerReport,
    LayerSpec, ParamSpec,
};
use super::params::ParamStore;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::labels::{BranchTask, Label};
use crate::ops::{IntersectMask, Padding};
use crate::tensor::Tensor;

/// Version of the model-graph JSON schema.
pub const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Sequential(SequentialConfig),
    Branch(BranchConfig),
    Hybrid(HybridConfig),
}

/// On-disk model-graph document: `{"version": 1, "model": {"kind": ..., ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub version: u32,
    pub model: ModelConfig,
}

impl GraphFile {
    pub fn new(model: ModelConfig) -> Self {
        GraphFile {
            version: GRAPH_VERSION,
            model,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != GRAPH_VERSION {
            return Err(Error::Version {
                what: "model graph",
                found: probe.version,
                expected: GRAPH_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph config serializes")
    }
}

/// Symbolic description of a graph: per-layer shapes and parameter counts.
#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub layers: Vec<LayerReport>,
    pub trainable: usize,
    pub non_trainable: usize,
    /// Shape at the intersect junction, if the graph has one.
    pub fusion_point: Option<Vec<usize>>,
    #[serde(skip)]
    pub params: Vec<ParamSpec>,
}

fn all_params(layers: &[LayerSpec], input: &[usize], prefix: &str) -> Result<Vec<ParamSpec>> {
    let names = layer_names(layers);
    let mut shape = input.to_vec();
    let mut params = Vec::new();
    for (spec, name) in layers.iter().zip(names) {
        let (out, p) = super::layer::layer_output(&spec.kind, &format!("{prefix}{name}"), &shape)?;
        params.extend(p);
        shape = out;
    }
    Ok(params)
}

fn check_input(shape: &[usize]) -> Result<()> {
    if shape.len() != 3 || shape.contains(&0) {
        return Err(Error::Config(format!(
            "input shape must be a positive (H, W, C), got {shape:?}"
        )));
    }
    Ok(())
}

fn sequential_summary(layers: &[LayerSpec], input: &[usize], prefix: &str) -> Result<GraphSummary> {
    check_input(input)?;
    let reports = shape_pass(layers, input, prefix)?;
    let params = all_params(layers, input, prefix)?;
    let (trainable, non_trainable) = count_params(&params);
    let output_shape = reports
        .last()
        .map(|r| r.output_shape.clone())
        .unwrap_or_else(|| input.to_vec());
    let fusion_point = layers
        .iter()
        .position(|l| matches!(l.kind, LayerKind::IntersectMarker))
        .map(|i| reports[i].output_shape.clone());
    Ok(GraphSummary {
        input_shape: input.to_vec(),
        output_shape,
        layers: reports,
        trainable,
        non_trainable,
        fusion_point,
        params,
    })
}

impl ModelConfig {
    pub fn input_shape(&self) -> &[usize] {
        match self {
            ModelConfig::Sequential(c) => &c.input_shape,
            ModelConfig::Branch(c) => &c.input_shape,
            ModelConfig::Hybrid(c) => &c.custom.input_shape,
        }
    }

    pub fn classes(&self) -> Vec<String> {
        match self {
            ModelConfig::Sequential(c) => c.classes.clone(),
            ModelConfig::Branch(c) => c.task.classes().iter().map(|l| l.name().to_string()).collect(),
            ModelConfig::Hybrid(_) => Label::names(),
        }
    }

    pub fn as_sequential(&self) -> Result<&SequentialConfig> {
        match self {
            ModelConfig::Sequential(c) => Ok(c),
            _ => Err(Error::Config("expected a sequential model".into())),
        }
    }

    pub fn as_branch(&self) -> Result<&BranchConfig> {
        match self {
            ModelConfig::Branch(c) => Ok(c),
            _ => Err(Error::Config("expected a branch model".into())),
        }
    }

    pub fn as_hybrid(&self) -> Result<&HybridConfig> {
        match self {
            ModelConfig::Hybrid(c) => Ok(c),
            _ => Err(Error::Config("expected a hybrid model".into())),
        }
    }

    /// Shape-checks the whole graph without allocating tensors.
    pub fn summary(&self) -> Result<GraphSummary> {
        match self {
            ModelConfig::Sequential(c) => {
                if c.classes.len() < 2 {
                    return Err(Error::Config("a classifier needs at least two classes".into()));
                }
                let s = sequential_summary(&c.layers, &c.input_shape, "")?;
                if s.output_shape != [c.classes.len()] {
                    return Err(Error::Config(format!(
                        "network output {:?} does not match {} classes",
                        s.output_shape,
                        c.classes.len()
                    )));
                }
                Ok(s)
            }
            ModelConfig::Branch(c) => {
                c.validate()?;
                sequential_summary(&c.layers(), &c.input_shape, "")
            }
            ModelConfig::Hybrid(h) => hybrid_summary(h),
        }
    }
}

fn hybrid_summary(h: &HybridConfig) -> Result<GraphSummary> {
    if !(-1.0..=1.0).contains(&h.fusion.tau) {
        return Err(Error::Config(format!(
            "fusion threshold must lie in [-1, 1], got {}",
            h.fusion.tau
        )));
    }
    let custom = ModelConfig::Sequential(h.custom.clone()).summary()?;
    let mut layers: Vec<LayerReport> = custom
        .layers
        .into_iter()
        .map(|mut r| {
            r.name = format!("{CUSTOM_PREFIX}{}", r.name);
            r
        })
        .collect();
    let mut params: Vec<ParamSpec> = custom
        .params
        .into_iter()
        .map(|mut p| {
            p.name = format!("{CUSTOM_PREFIX}{}", p.name);
            p
        })
        .collect();
    let fusion_point = custom
        .fusion_point
        .ok_or_else(|| Error::Config("custom network has no intersect marker".into()))?;

    let mut tap_shape: Option<Vec<usize>> = None;
    for task in BranchTask::ALL {
        let b = h.branch(task);
        if b.task != task {
            return Err(Error::Config(format!(
                "branch slot {} holds a {:?} branch",
                task.slug(),
                b.task
            )));
        }
        if b.input_shape != h.custom.input_shape {
            return Err(Error::Config(format!(
                "{} input {:?} differs from custom input {:?}",
                task.slug(),
                b.input_shape,
                h.custom.input_shape
            )));
        }
        b.validate()?;
        let prefix = branch_prefix(task);
        let s = sequential_summary(&b.layers(), &b.input_shape, &prefix)?;
        let tap = s.layers[b.tap_index()?].output_shape.clone();
        match &tap_shape {
            None => tap_shape = Some(tap),
            Some(t) if *t != tap => {
                return Err(Error::Config(format!(
                    "branch feature taps differ: {t:?} vs {tap:?}"
                )))
            }
            _ => {}
        }
        layers.extend(s.layers);
        params.extend(s.params);
    }
    let tap = tap_shape.expect("two branches");

    let target = h.fusion.target_shape.clone().unwrap_or_else(|| fusion_point.clone());
    let proj = format!("{PROJECTION_PREFIX}conv2d");
    if target != fusion_point || target.len() != 3 {
        return Err(Error::Layer {
            layer: proj,
            msg: format!(
                "fusion-point shape mismatch after projection: projected {target:?}, custom network has {fusion_point:?}"
            ),
        });
    }
    let proj_params = conv_params(&proj, 1, tap[2], target[2]);
    let (t, n) = count_params(&proj_params);
    layers.push(LayerReport {
        name: proj,
        layer_type: "Conv2D".into(),
        output_shape: vec![tap[0], tap[1], target[2]],
        trainable: t,
        non_trainable: n,
    });
    layers.push(LayerReport {
        name: format!("{PROJECTION_PREFIX}resize"),
        layer_type: "BilinearResize".into(),
        output_shape: target.clone(),
        trainable: 0,
        non_trainable: 0,
    });
    params.extend(proj_params);

    let (trainable, non_trainable) = count_params(&params);
    Ok(GraphSummary {
        input_shape: h.custom.input_shape.clone(),
        output_shape: vec![h.custom.classes.len()],
        layers,
        trainable,
        non_trainable,
        fusion_point: Some(fusion_point),
        params,
    })
}

/// Batch statistics recorded by a training-mode batchnorm layer.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub prefix: String,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub momentum: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Batch statistics and dropout for the trainable parts.
    pub train: bool,
    /// Skip the branches; the intersect junction becomes a pass-through.
    pub custom_only: bool,
    /// Features used in place of the projected branch features.
    pub branch_features: Option<Tensor<f32>>,
    /// Precomputed merged branch maps (before projection). Valid for frozen
    /// branches, whose output does not change during training.
    pub branch_taps: Option<Tensor<f32>>,
    pub dropout_seed: u64,
}

impl ForwardOptions {
    pub fn infer() -> Self {
        Self::default()
    }

    pub fn train(dropout_seed: u64) -> Self {
        ForwardOptions {
            train: true,
            dropout_seed,
            ..Self::default()
        }
    }
}

pub struct ForwardOutput {
    pub logits: Var,
    /// Output of the second-to-last dense layer.
    pub penultimate: Option<Var>,
    /// Features leaving the intersect junction.
    pub fusion: Option<Var>,
    pub intersect: Option<IntersectMask>,
    pub bn_updates: Vec<BnUpdate>,
    /// Tape leaf of every parameter used.
    pub params: HashMap<String, Var>,
    /// Runtime output shape (batch axis excluded) of every executed layer.
    pub shapes: Vec<(String, Vec<usize>)>,
}

struct Exec<'a> {
    tape: &'a mut Tape<f32>,
    store: &'a ParamStore,
    vars: HashMap<String, Var>,
    rng: ChaCha8Rng,
    bn_updates: Vec<BnUpdate>,
    shapes: Vec<(String, Vec<usize>)>,
}

impl Exec<'_> {
    fn bind(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let p = self.store.get(name)?;
        let v = self.tape.leaf(p.value.clone(), p.trainable && !p.frozen);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    fn conv(&mut self, x: Var, prefix: &str, stride: usize, padding: Padding) -> Result<Var> {
        let k = self.bind(&format!("{prefix}.kernel"))?;
        let b = self.bind(&format!("{prefix}.bias"))?;
        self.tape.conv2d(x, k, b, stride, padding)
    }

    fn batchnorm(&mut self, x: Var, prefix: &str, momentum: f64, eps: f64, train: bool) -> Result<Var> {
        let gamma = self.bind(&format!("{prefix}.gamma"))?;
        let beta = self.bind(&format!("{prefix}.beta"))?;
        if train {
            let (y, stats) = self.tape.batchnorm_train(x, gamma, beta, eps)?;
            self.bn_updates.push(BnUpdate {
                prefix: prefix.to_string(),
                mean: stats.mean,
                var: stats.var,
                momentum,
            });
            Ok(y)
        } else {
            let mean = self.bind(&format!("{prefix}.moving_mean"))?;
            let var = self.bind(&format!("{prefix}.moving_var"))?;
            self.tape.batchnorm_infer(x, gamma, beta, mean, var, eps)
        }
    }

    fn layer(&mut self, x: Var, kind: &LayerKind, name: &str, train: bool) -> Result<Var> {
        let tape_ok = |r: Result<Var>| r.map_err(|e| e.in_layer(name));
        match *kind {
            LayerKind::Conv {
                stride,
                padding,
                activation,
                ..
            } => {
                let y = tape_ok(self.conv(x, name, stride, padding))?;
                match activation {
                    super::layer::Activation::Relu => self.tape.relu(y),
                    super::layer::Activation::None => Ok(y),
                }
            }
            LayerKind::BatchNorm { momentum, eps } => tape_ok(self.batchnorm(x, name, momentum, eps, train)),
            LayerKind::MaxPool {
                pool,
                stride,
                padding,
            } => tape_ok(self.tape.maxpool2d(x, pool, stride, padding)),
            LayerKind::Dense { activation, .. } => {
                let w = self.bind(&format!("{name}.kernel"))?;
                let b = self.bind(&format!("{name}.bias"))?;
                let y = tape_ok(self.tape.dense(x, w, b))?;
                match activation {
                    super::layer::Activation::Relu => self.tape.relu(y),
                    super::layer::Activation::None => Ok(y),
                }
            }
            LayerKind::Dropout { rate } => tape_ok(self.tape.dropout(x, rate, train, &mut self.rng)),
            LayerKind::Flatten => self.tape.flatten(x),
            LayerKind::Relu => self.tape.relu(x),
            LayerKind::GlobalAvgPool => tape_ok(self.tape.global_avg_pool(x)),
            LayerKind::IntersectMarker => Ok(x),
            LayerKind::ResidualBlock {
                out,
                stride,
                momentum,
                ..
            } => {
                let cin = *self.tape.value(x).shape().last().expect("rank-4 input");
                let projection = cin != out || stride != 1;
                let parts = residual_parts(name, projection);
                let eps = super::layer::DEFAULT_BN_EPS;
                let mut h = x;
                for (i, (conv, bn)) in parts.iter().take(3).enumerate() {
                    let (s, pad) = if i == 1 { (stride, Padding::Same) } else { (1, Padding::Valid) };
                    h = tape_ok(self.conv(h, conv, s, pad))?;
                    h = tape_ok(self.batchnorm(h, bn, momentum, eps, train))?;
                    if i < 2 {
                        h = self.tape.relu(h)?;
                    }
                }
                let shortcut = if projection {
                    let (conv, bn) = &parts[3];
                    let s = tape_ok(self.conv(x, conv, stride, Padding::Same))?;
                    tape_ok(self.batchnorm(s, bn, momentum, eps, train))?
                } else {
                    x
                };
                let sum = tape_ok(self.tape.add(h, shortcut))?;
                self.tape.relu(sum)
            }
        }
    }

    /// Runs `layers[range]`; returns the output and, when `penultimate` lies in
    /// the range, that layer's output.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        mut x: Var,
        layers: &[LayerSpec],
        names: &[String],
        prefix: &str,
        range: Range<usize>,
        train: bool,
        penultimate: Option<usize>,
    ) -> Result<(Var, Option<Var>)> {
        let mut tap = None;
        for i in range {
            let name = format!("{prefix}{}", names[i]);
            x = self.layer(x, &layers[i].kind, &name, train)?;
            let shape = self.tape.value(x).shape()[1..].to_vec();
            self.shapes.push((name, shape));
            if Some(i) == penultimate {
                tap = Some(x);
            }
        }
        Ok((x, tap))
    }
}

fn penultimate_dense(layers: &[LayerSpec]) -> Option<usize> {
    let dense: Vec<usize> = layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l.kind, LayerKind::Dense { .. }))
        .map(|(i, _)| i)
        .collect();
    (dense.len() >= 2).then(|| dense[dense.len() - 2])
}

/// A model configuration together with its parameters.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    config: ModelConfig,
    params: ParamStore,
    summary: GraphSummary,
}

impl ModelGraph {
    /// Shape-checks `config` and initializes parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let summary = config.summary()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamStore::initialize(&summary.params, &mut rng)?;
        Ok(ModelGraph {
            config,
            params,
            summary,
        })
    }

    /// Pairs a configuration with existing parameters, checking that names
    /// and shapes match exactly.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let summary = config.summary()?;
        if params.len() != summary.params.len() {
            return Err(Error::Config(format!(
                "graph declares {} parameters, {} supplied",
                summary.params.len(),
                params.len()
            )));
        }
        for spec in &summary.params {
            let p = params.get(&spec.name)?;
            if p.value.shape() != spec.shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{}` has shape {:?}, graph expects {:?}",
                    spec.name,
                    p.value.shape(),
                    spec.shape
                )));
            }
        }
        Ok(ModelGraph {
            config,
            params,
            summary,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn summary(&self) -> &GraphSummary {
        &self.summary
    }

    pub fn classes(&self) -> Vec<String> {
        self.config.classes()
    }

    /// Applies `moving = momentum * moving + (1 - momentum) * batch`.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate]) -> Result<()> {
        for u in updates {
            let m = u.momentum as f32;
            for (suffix, batch) in [("moving_mean", &u.mean), ("moving_var", &u.var)] {
                let p = self.params.get_mut(&format!("{}.{suffix}", u.prefix))?;
                for (mv, &b) in p.value.data_mut().iter_mut().zip(batch) {
                    *mv = m * *mv + (1.0 - m) * b;
                }
            }
        }
        Ok(())
    }

    fn check_input(&self, tape: &Tape<f32>, input: Var) -> Result<()> {
        let shape = tape.value(input).shape();
        if shape.len() != 4 || shape[1..] != *self.config.input_shape() {
            return Err(Error::Config(format!(
                "model expects (N, {:?}) input, got {shape:?}",
                self.config.input_shape()
            )));
        }
        Ok(())
    }

    /// Records the forward pass on `tape` and returns the logits.
    pub fn forward(&self, tape: &mut Tape<f32>, input: Var, opts: &ForwardOptions) -> Result<ForwardOutput> {
        self.check_input(tape, input)?;
        let mut exec = Exec {
            tape,
            store: &self.params,
            vars: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(opts.dropout_seed),
            bn_updates: Vec::new(),
            shapes: Vec::new(),
        };
        let (logits, penultimate, fusion, intersect) = match &self.config {
            ModelConfig::Sequential(c) => {
                let names = layer_names(&c.layers);
                let pen = penultimate_dense(&c.layers);
                let (y, tap) = exec.run(input, &c.layers, &names, "", 0..c.layers.len(), opts.train, pen)?;
                (y, tap, None, None)
            }
            ModelConfig::Branch(c) => {
                let layers = c.layers();
                let names = layer_names(&layers);
                let (y, _) = exec.run(input, &layers, &names, "", 0..layers.len(), opts.train, None)?;
                (y, None, None, None)
            }
            ModelConfig::Hybrid(h) => hybrid_forward(&mut exec, h, input, opts)?,
        };
        Ok(ForwardOutput {
            logits,
            penultimate,
            fusion,
            intersect,
            bn_updates: exec.bn_updates,
            params: exec.vars,
            shapes: exec.shapes,
        })
    }

    /// Class probabilities in inference mode.
    pub fn predict(&self, images: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.predict_with(images, &ForwardOptions::infer())
    }

    pub fn predict_with(&self, images: &Tensor<f32>, opts: &ForwardOptions) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let out = self.forward(&mut tape, x, opts)?;
        crate::ops::softmax_rows(tape.value(out.logits))
    }

    /// Merged branch feature maps (before projection) in inference mode,
    /// for caching while the branches are frozen.
    pub fn merged_branch_taps(&self, images: &Tensor<f32>) -> Result<Tensor<f32>> {
        let h = self.config.as_hybrid()?;
        let mut tape = Tape::new();
        let input = tape.constant(images.clone());
        self.check_input(&tape, input)?;
        let mut exec = Exec {
            tape: &mut tape,
            store: &self.params,
            vars: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            bn_updates: Vec::new(),
            shapes: Vec::new(),
        };
        let merged = merge_branch_taps(&mut exec, h, input, &ForwardOptions::infer())?;
        Ok(tape.value(merged).clone())
    }
}

impl PartialEq for ModelGraph {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Whether a branch's parameters are frozen (then it runs in inference mode).
fn branch_frozen(store: &ParamStore, task: BranchTask) -> bool {
    let prefix = branch_prefix(task);
    store
        .iter()
        .filter(|(n, _)| n.starts_with(&prefix))
        .all(|(_, p)| p.frozen)
}

fn hybrid_forward(
    exec: &mut Exec<'_>,
    h: &HybridConfig,
    input: Var,
    opts: &ForwardOptions,
) -> Result<(Var, Option<Var>, Option<Var>, Option<IntersectMask>)> {
    let layers = &h.custom.layers;
    let names = layer_names(layers);
    let marker = h
        .custom
        .marker_index()
        .ok_or_else(|| Error::Config("custom network has no intersect marker".into()))?;
    let pen = penultimate_dense(layers);

    let (features, _) = exec.run(input, layers, &names, CUSTOM_PREFIX, 0..marker, opts.train, pen)?;
    let fusion_shape = exec.tape.value(features).shape().to_vec();

    let (fused, mask) = if opts.custom_only {
        (features, None)
    } else {
        let branch = match &opts.branch_features {
            Some(t) => {
                if t.shape() != fusion_shape.as_slice() {
                    return Err(Error::Config(format!(
                        "branch features {:?} do not match fusion point {fusion_shape:?}",
                        t.shape()
                    )));
                }
                exec.tape.constant(t.clone())
            }
            None => project_branches(exec, h, input, opts, &fusion_shape)?,
        };
        let (y, mask) = exec
            .tape
            .intersect_features(features, branch, h.fusion.tau)
            .map_err(|e| e.in_layer(&format!("{CUSTOM_PREFIX}{}", names[marker])))?;
        (y, Some(mask))
    };
    exec.shapes
        .push((format!("{CUSTOM_PREFIX}{}", names[marker]), fusion_shape[1..].to_vec()));

    let (logits, tap) = exec.run(
        fused,
        layers,
        &names,
        CUSTOM_PREFIX,
        marker + 1..layers.len(),
        opts.train,
        pen,
    )?;
    Ok((logits, tap, Some(fused), mask))
}

fn project_branches(
    exec: &mut Exec<'_>,
    h: &HybridConfig,
    input: Var,
    opts: &ForwardOptions,
    fusion_shape: &[usize],
) -> Result<Var> {
    let merged = match &opts.branch_taps {
        Some(t) => exec.tape.constant(t.clone()),
        None => merge_branch_taps(exec, h, input, opts)?,
    };
    let proj_name = format!("{PROJECTION_PREFIX}conv2d");
    let projected = exec
        .conv(merged, &proj_name, 1, Padding::Valid)
        .map_err(|e| e.in_layer(&proj_name))?;
    exec.shapes
        .push((proj_name, exec.tape.value(projected).shape()[1..].to_vec()));
    let resized = exec.tape.bilinear_resize(projected, fusion_shape[1], fusion_shape[2])?;
    exec.shapes.push((
        format!("{PROJECTION_PREFIX}resize"),
        exec.tape.value(resized).shape()[1..].to_vec(),
    ));
    Ok(resized)
}

fn merge_branch_taps(exec: &mut Exec<'_>, h: &HybridConfig, input: Var, opts: &ForwardOptions) -> Result<Var> {
    let mut taps = Vec::with_capacity(2);
    for task in BranchTask::ALL {
        let b = h.branch(task);
        let layers = b.layers();
        let names = layer_names(&layers);
        let train = opts.train && !branch_frozen(exec.store, task);
        let (y, _) = exec.run(
            input,
            &layers,
            &names,
            &branch_prefix(task),
            0..b.tap_index()? + 1,
            train,
            None,
        )?;
        taps.push(y);
    }
    match h.fusion.merge {
        MergeRule::Mean => exec.tape.merge_mean(taps[0], taps[1]),
        MergeRule::Max => exec.tape.merge_max(taps[0], taps[1]),
    }
}
