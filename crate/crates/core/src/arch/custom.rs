//! The custom CNN: nine convolutions, each followed by batchnorm, four max
//! pools, and a three-layer dense head.

use serde::{Deserialize, Serialize};

use super::graph::{ModelConfig, ModelGraph};
use super::layer::{Activation, LayerKind, LayerSpec, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::ops::Padding;

/// A plain sequential network over `(H, W, C)` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub classes: Vec<String>,
    pub layers: Vec<LayerSpec>,
}

impl SequentialConfig {
    /// Index of the intersect marker, if the network has a fusion junction.
    pub fn marker_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| matches!(l.kind, LayerKind::IntersectMarker))
    }
}

/// Width and geometry knobs of the custom CNN family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CustomCnnShape {
    /// Filters of the stem convolution (128 in the full network).
    pub stem: usize,
    /// Filters of the second block (256).
    pub mid: usize,
    /// Filters of the deep block (512).
    pub wide: usize,
    /// Units of the two hidden dense layers (1024).
    pub dense: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub bn_momentum: f64,
    pub dropout: f64,
}

impl CustomCnnShape {
    /// The full-size network.
    pub const FULL: CustomCnnShape = CustomCnnShape {
        stem: 128,
        mid: 256,
        wide: 512,
        dense: 1024,
        stem_kernel: 8,
        stem_stride: 3,
        bn_momentum: DEFAULT_BN_MOMENTUM,
        dropout: 0.5,
    };

    /// Desk-scale variant for 64x64 inputs: widths divided by 16 and a
    /// stride-2 4x4 stem so the pool chain ends at 1x1 (64→31→10→5→2→1).
    /// Moving statistics use momentum 0.9 so they settle within a few
    /// dozen steps.
    pub const DESK: CustomCnnShape = CustomCnnShape {
        stem: 8,
        mid: 16,
        wide: 32,
        dense: 64,
        stem_kernel: 4,
        stem_stride: 2,
        bn_momentum: 0.9,
        dropout: 0.5,
    };

    pub fn layers(&self, num_classes: usize) -> Vec<LayerSpec> {
        let conv = |filters, kernel, stride, padding| -> LayerSpec {
            LayerKind::Conv {
                filters,
                kernel,
                stride,
                padding,
                activation: Activation::Relu,
            }
            .into()
        };
        let bn = || -> LayerSpec {
            LayerKind::BatchNorm {
                momentum: self.bn_momentum,
                eps: DEFAULT_BN_EPS,
            }
            .into()
        };
        let pool = |p: usize| -> LayerSpec {
            LayerKind::MaxPool {
                pool: p,
                stride: p,
                padding: Padding::Valid,
            }
            .into()
        };
        let dense = |units, activation| -> LayerSpec { LayerKind::Dense { units, activation }.into() };
        let dropout = || -> LayerSpec { LayerKind::Dropout { rate: self.dropout }.into() };

        vec![
            conv(self.stem, self.stem_kernel, self.stem_stride, Padding::Valid),
            bn(),
            conv(self.mid, 5, 1, Padding::Same),
            bn(),
            pool(3),
            conv(self.mid, 3, 1, Padding::Same),
            bn(),
            conv(self.mid, 1, 1, Padding::Same),
            bn(),
            conv(self.mid, 1, 1, Padding::Same),
            bn(),
            LayerKind::IntersectMarker.into(),
            conv(self.wide, 3, 1, Padding::Same),
            bn(),
            pool(2),
            conv(self.wide, 3, 1, Padding::Same),
            bn(),
            conv(self.wide, 3, 1, Padding::Same),
            bn(),
            pool(2),
            conv(self.wide, 3, 1, Padding::Same),
            bn(),
            pool(2),
            LayerKind::Flatten.into(),
            dense(self.dense, Activation::Relu),
            dropout(),
            dense(self.dense, Activation::Relu),
            dropout(),
            dense(num_classes, Activation::None),
        ]
    }
}

/// Custom CNN configuration for an arbitrary `(H, W, C)` input.
pub fn custom_cnn_config(input_shape: &[usize], shape: CustomCnnShape) -> Result<SequentialConfig> {
    if input_shape.len() != 3 || input_shape[0] < 8 || input_shape[1] < 8 {
        return Err(Error::Config(format!(
            "custom CNN needs an (H, W, C) input of at least 8x8, got {input_shape:?}"
        )));
    }
    let config = SequentialConfig {
        name: "custom_cnn".into(),
        input_shape: input_shape.to_vec(),
        classes: Label::names(),
        layers: shape.layers(Label::ALL.len()),
    };
    ModelConfig::Sequential(config.clone()).summary()?;
    Ok(config)
}

/// The full network at 224x224x3 with the reference output shapes pinned at
/// every pool and at the flatten layer.
pub fn full_custom_config() -> SequentialConfig {
    let mut config = SequentialConfig {
        name: "custom_cnn_224".into(),
        input_shape: vec![224, 224, 3],
        classes: Label::names(),
        layers: CustomCnnShape::FULL.layers(Label::ALL.len()),
    };
    let checkpoints: [(usize, &[usize]); 5] = [
        (4, &[24, 24, 256]),
        (14, &[12, 12, 512]),
        (19, &[6, 6, 512]),
        (22, &[3, 3, 512]),
        (23, &[4608]),
    ];
    for (idx, shape) in checkpoints {
        config.layers[idx].expect = Some(shape.to_vec());
    }
    config
}

/// Desk-scale custom CNN over 64x64x3 inputs.
pub fn desk_custom_config() -> SequentialConfig {
    let mut c = custom_cnn_config(&[64, 64, 3], CustomCnnShape::DESK).expect("desk config is valid");
    c.name = "custom_cnn_desk".into();
    c
}

/// Builds and initializes the custom CNN.
pub fn build_custom_cnn(input_shape: &[usize], seed: u64) -> Result<ModelGraph> {
    let config = custom_cnn_config(input_shape, CustomCnnShape::FULL)?;
    ModelGraph::new(ModelConfig::Sequential(config), seed)
}
