//! Residual backbone used by the two binary branches.

use serde::{Deserialize, Serialize};

use super::layer::{Activation, LayerKind, LayerSpec, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::labels::BranchTask;
use crate::ops::Padding;

fn default_momentum() -> f64 {
    DEFAULT_BN_MOMENTUM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub task: BranchTask,
    pub input_shape: Vec<usize>,
    /// Filters of the 7x7 stride-2 stem convolution.
    pub stem_width: usize,
    /// Output channels of each residual stage; bottlenecks use a quarter.
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    /// Stage whose output feeds the fusion junction.
    pub tap_stage: usize,
    #[serde(default = "default_momentum")]
    pub bn_momentum: f64,
}

impl BranchConfig {
    /// 224x224 input, stages 64→256→512 with two blocks each.
    pub fn standard(task: BranchTask) -> Self {
        BranchConfig {
            task,
            input_shape: vec![224, 224, 3],
            stem_width: 64,
            stage_widths: vec![64, 256, 512],
            blocks_per_stage: vec![2, 2, 2],
            tap_stage: 2,
            bn_momentum: DEFAULT_BN_MOMENTUM,
        }
    }

    /// The ResNet-101 stage layout (3, 4, 23, 3 bottlenecks).
    pub fn resnet101(task: BranchTask) -> Self {
        BranchConfig {
            stage_widths: vec![256, 512, 1024, 2048],
            blocks_per_stage: vec![3, 4, 23, 3],
            tap_stage: 3,
            ..Self::standard(task)
        }
    }

    /// Desk-scale branch for 64x64 inputs.
    pub fn desk(task: BranchTask) -> Self {
        BranchConfig {
            task,
            input_shape: vec![64, 64, 3],
            stem_width: 8,
            stage_widths: vec![8, 16, 32],
            blocks_per_stage: vec![2, 2, 2],
            tap_stage: 2,
            bn_momentum: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_widths.is_empty() {
            return Err(Error::Config("branch needs at least one residual stage".into()));
        }
        if self.stage_widths.len() != self.blocks_per_stage.len() {
            return Err(Error::Config(format!(
                "{} stage widths but {} block counts",
                self.stage_widths.len(),
                self.blocks_per_stage.len()
            )));
        }
        if self.stage_widths.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(format!(
                "stage widths must be non-decreasing, got {:?}",
                self.stage_widths
            )));
        }
        if self.blocks_per_stage.contains(&0) || self.stem_width == 0 || self.stage_widths.contains(&0) {
            return Err(Error::Config("branch widths and block counts must be positive".into()));
        }
        if self.tap_stage >= self.stage_widths.len() {
            return Err(Error::Config(format!(
                "feature tap stage {} out of range for {} stages",
                self.tap_stage,
                self.stage_widths.len()
            )));
        }
        Ok(())
    }

    /// Layer list: stem, residual stages, global pooling and a 2-way head.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut layers: Vec<LayerSpec> = vec![
            LayerKind::Conv {
                filters: self.stem_width,
                kernel: 7,
                stride: 2,
                padding: Padding::Same,
                activation: Activation::None,
            }
            .into(),
            LayerKind::BatchNorm {
                momentum: self.bn_momentum,
                eps: DEFAULT_BN_EPS,
            }
            .into(),
            LayerKind::Relu.into(),
            LayerKind::MaxPool {
                pool: 3,
                stride: 2,
                padding: Padding::Same,
            }
            .into(),
        ];
        for (stage, (&width, &blocks)) in self.stage_widths.iter().zip(&self.blocks_per_stage).enumerate() {
            for b in 0..blocks {
                layers.push(
                    LayerKind::ResidualBlock {
                        mid: (width / 4).max(1),
                        out: width,
                        stride: if stage > 0 && b == 0 { 2 } else { 1 },
                        momentum: self.bn_momentum,
                    }
                    .into(),
                );
            }
        }
        layers.push(LayerKind::GlobalAvgPool.into());
        layers.push(
            LayerKind::Dense {
                units: 2,
                activation: Activation::None,
            }
            .into(),
        );
        layers
    }

    /// Index of the last layer of `stage` in [`Self::layers`].
    pub fn stage_end(&self, stage: usize) -> usize {
        4 + self.blocks_per_stage[..=stage].iter().sum::<usize>() - 1
    }

    pub fn tap_index(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.stage_end(self.tap_stage))
    }
}
