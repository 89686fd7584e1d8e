//! Declarative layer descriptions and the symbolic shape pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{dense_param_count, window_extent, Padding};

pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;
pub const DEFAULT_BN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    None,
    Relu,
}

fn one() -> usize {
    1
}

fn default_momentum() -> f64 {
    DEFAULT_BN_MOMENTUM
}

fn default_eps() -> f64 {
    DEFAULT_BN_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        activation: Activation,
    },
    #[serde(rename = "batchnorm")]
    BatchNorm {
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    #[serde(rename = "maxpool")]
    MaxPool {
        pool: usize,
        stride: usize,
        #[serde(default)]
        padding: Padding,
    },
    Dense {
        units: usize,
        #[serde(default)]
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Relu,
    GlobalAvgPool,
    /// Bottleneck unit: 1x1 reduce, 3x3 (strided), 1x1 expand, plus an identity
    /// or 1x1-projection shortcut. Each convolution is followed by batchnorm.
    ResidualBlock {
        mid: usize,
        out: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    /// Junction where branch features are intersected with the running features.
    IntersectMarker,
}

/// One entry of a model's layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    /// Optional shape checkpoint: the symbolic pass fails if this layer's
    /// output shape (batch axis excluded) differs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Vec<usize>>,
}

impl From<LayerKind> for LayerSpec {
    fn from(kind: LayerKind) -> Self {
        LayerSpec { kind, expect: None }
    }
}

impl LayerSpec {
    pub fn expecting(mut self, shape: &[usize]) -> Self {
        self.expect = Some(shape.to_vec());
        self
    }
}

impl LayerKind {
    /// Keras-style name stem and display type.
    pub fn naming(&self) -> (&'static str, &'static str) {
        match self {
            LayerKind::Conv { .. } => ("conv2d", "Conv2D"),
            LayerKind::BatchNorm { .. } => ("batch_normalization", "BatchNormalization"),
            LayerKind::MaxPool { .. } => ("max_pooling2d", "MaxPooling2D"),
            LayerKind::Dense { .. } => ("dense", "Dense"),
            LayerKind::Dropout { .. } => ("dropout", "Dropout"),
            LayerKind::Flatten => ("flatten", "Flatten"),
            LayerKind::Relu => ("re_lu", "ReLU"),
            LayerKind::GlobalAvgPool => ("global_average_pooling2d", "GlobalAveragePooling2D"),
            LayerKind::ResidualBlock { .. } => ("residual_block", "ResidualBlock"),
            LayerKind::IntersectMarker => ("intersect_features", "IntersectFeatures"),
        }
    }
}

/// Names layers `conv2d, conv2d_1, ...` per kind, in order.
pub fn layer_names(layers: &[LayerSpec]) -> Vec<String> {
    let mut counts = std::collections::HashMap::<&str, usize>::new();
    layers
        .iter()
        .map(|l| {
            let stem = l.kind.naming().0;
            let n = counts.entry(stem).or_insert(0);
            let name = if *n == 0 {
                stem.to_string()
            } else {
                format!("{stem}_{n}")
            };
            *n += 1;
            name
        })
        .collect()
}

/// How a parameter is initialized and whether the optimizer updates it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamRole {
    /// He-uniform with the given fan-in.
    Weight { fan_in: usize },
    Bias,
    Gamma,
    Beta,
    MovingMean,
    MovingVar,
}

impl ParamRole {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamRole::MovingMean | ParamRole::MovingVar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn conv_params(prefix: &str, k: usize, cin: usize, cout: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec {
            name: format!("{prefix}.kernel"),
            shape: vec![k, k, cin, cout],
            role: ParamRole::Weight { fan_in: k * k * cin },
        },
        ParamSpec {
            name: format!("{prefix}.bias"),
            shape: vec![cout],
            role: ParamRole::Bias,
        },
    ]
}

pub(crate) fn bn_params(prefix: &str, c: usize) -> Vec<ParamSpec> {
    [
        ("gamma", ParamRole::Gamma),
        ("beta", ParamRole::Beta),
        ("moving_mean", ParamRole::MovingMean),
        ("moving_var", ParamRole::MovingVar),
    ]
    .into_iter()
    .map(|(n, role)| ParamSpec {
        name: format!("{prefix}.{n}"),
        shape: vec![c],
        role,
    })
    .collect()
}

/// Sub-layer prefixes of a residual block, in execution order.
pub(crate) fn residual_parts(block: &str, projection: bool) -> Vec<(String, String)> {
    let mut parts = vec![
        (format!("{block}.reduce"), format!("{block}.reduce_bn")),
        (format!("{block}.conv"), format!("{block}.conv_bn")),
        (format!("{block}.expand"), format!("{block}.expand_bn")),
    ];
    if projection {
        parts.push((format!("{block}.shortcut"), format!("{block}.shortcut_bn")));
    }
    parts
}

/// Result of checking one layer symbolically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub layer_type: String,
    /// Output shape without the batch axis.
    pub output_shape: Vec<usize>,
    pub trainable: usize,
    pub non_trainable: usize,
}

impl LayerReport {
    pub fn params(&self) -> usize {
        self.trainable + self.non_trainable
    }
}

fn spatial(shape: &[usize], layer: &str) -> Result<(usize, usize, usize)> {
    match shape {
        [h, w, c] => Ok((*h, *w, *c)),
        _ => Err(Error::Layer {
            layer: layer.to_string(),
            msg: format!("expects an (H, W, C) input, got {shape:?}"),
        }),
    }
}

fn check_positive(layer: &str, what: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Layer {
            layer: layer.to_string(),
            msg: format!("{what} must be positive"),
        });
    }
    Ok(())
}

/// Output shape and parameters of one layer.
pub fn layer_output(
    kind: &LayerKind,
    name: &str,
    input: &[usize],
) -> Result<(Vec<usize>, Vec<ParamSpec>)> {
    let at = |e: Error| e.in_layer(name);
    match kind {
        &LayerKind::Conv {
            filters,
            kernel,
            stride,
            padding,
            ..
        } => {
            let (h, w, c) = spatial(input, name)?;
            check_positive(name, "filters", filters)?;
            check_positive(name, "stride", stride)?;
            check_positive(name, "kernel", kernel)?;
            let (oh, _) = window_extent(h, kernel, stride, padding).map_err(at)?;
            let (ow, _) = window_extent(w, kernel, stride, padding).map_err(at)?;
            Ok((vec![oh, ow, filters], conv_params(name, kernel, c, filters)))
        }
        &LayerKind::BatchNorm { momentum, eps } => {
            if !(eps > 0.0) {
                return Err(at(Error::Config(format!("eps must be > 0, got {eps}"))));
            }
            if !(0.0..1.0).contains(&momentum) {
                return Err(at(Error::Config(format!("momentum must be in [0, 1), got {momentum}"))));
            }
            let c = *input.last().ok_or_else(|| at(Error::Shape("empty input".into())))?;
            Ok((input.to_vec(), bn_params(name, c)))
        }
        &LayerKind::MaxPool {
            pool,
            stride,
            padding,
        } => {
            let (h, w, c) = spatial(input, name)?;
            check_positive(name, "pool", pool)?;
            check_positive(name, "stride", stride)?;
            let (oh, _) = window_extent(h, pool, stride, padding).map_err(at)?;
            let (ow, _) = window_extent(w, pool, stride, padding).map_err(at)?;
            Ok((vec![oh, ow, c], Vec::new()))
        }
        &LayerKind::Dense { units, .. } => {
            let [d] = input[..] else {
                return Err(at(Error::Shape(format!(
                    "dense expects a flat input, got {input:?}"
                ))));
            };
            check_positive(name, "units", units)?;
            let params = vec![
                ParamSpec {
                    name: format!("{name}.kernel"),
                    shape: vec![d, units],
                    role: ParamRole::Weight { fan_in: d },
                },
                ParamSpec {
                    name: format!("{name}.bias"),
                    shape: vec![units],
                    role: ParamRole::Bias,
                },
            ];
            debug_assert_eq!(params.iter().map(ParamSpec::len).sum::<usize>(), dense_param_count(d, units));
            Ok((vec![units], params))
        }
        &LayerKind::Dropout { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return Err(at(Error::Config(format!("dropout rate must be in [0, 1), got {rate}"))));
            }
            Ok((input.to_vec(), Vec::new()))
        }
        LayerKind::Flatten => Ok((vec![input.iter().product()], Vec::new())),
        LayerKind::Relu | LayerKind::IntersectMarker => Ok((input.to_vec(), Vec::new())),
        LayerKind::GlobalAvgPool => {
            let (_, _, c) = spatial(input, name)?;
            Ok((vec![c], Vec::new()))
        }
        &LayerKind::ResidualBlock {
            mid,
            out,
            stride,
            momentum,
        } => {
            let (h, w, cin) = spatial(input, name)?;
            check_positive(name, "mid", mid)?;
            check_positive(name, "out", out)?;
            check_positive(name, "stride", stride)?;
            if !(0.0..1.0).contains(&momentum) {
                return Err(at(Error::Config(format!("momentum must be in [0, 1), got {momentum}"))));
            }
            let (oh, _) = window_extent(h, 3, stride, Padding::Same).map_err(at)?;
            let (ow, _) = window_extent(w, 3, stride, Padding::Same).map_err(at)?;
            let projection = cin != out || stride != 1;
            let shapes = [(1, cin, mid), (3, mid, mid), (1, mid, out), (1, cin, out)];
            let mut params = Vec::new();
            for ((conv, bn), (k, ci, co)) in residual_parts(name, projection).into_iter().zip(shapes) {
                params.extend(conv_params(&conv, k, ci, co));
                params.extend(bn_params(&bn, co));
            }
            Ok((vec![oh, ow, out], params))
        }
    }
}

/// Parameter totals of a sequence of parameter specs.
pub fn count_params(params: &[ParamSpec]) -> (usize, usize) {
    params.iter().fold((0, 0), |(t, n), p| {
        if p.role.trainable() {
            (t + p.len(), n)
        } else {
            (t, n + p.len())
        }
    })
}

/// Shape-checks a layer list without allocating any tensor.
pub fn shape_pass(layers: &[LayerSpec], input: &[usize], prefix: &str) -> Result<Vec<LayerReport>> {
    let names = layer_names(layers);
    let mut shape = input.to_vec();
    let mut reports = Vec::with_capacity(layers.len());
    for (spec, name) in layers.iter().zip(&names) {
        let full = format!("{prefix}{name}");
        let (out, params) = layer_output(&spec.kind, &full, &shape)?;
        if let Some(expect) = &spec.expect {
            if *expect != out {
                return Err(Error::Layer {
                    layer: full,
                    msg: format!("output shape {out:?} differs from expected {expect:?}"),
                });
            }
        }
        let (trainable, non_trainable) = count_params(&params);
        reports.push(LayerReport {
            name: full,
            layer_type: spec.kind.naming().1.to_string(),
            output_shape: out.clone(),
            trainable,
            non_trainable,
        });
        shape = out;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_follow_keras_convention() {
        let layers: Vec<LayerSpec> = vec![
            LayerKind::Conv { filters: 1, kernel: 1, stride: 1, padding: Padding::Valid, activation: Activation::None }.into(),
            LayerKind::BatchNorm { momentum: 0.99, eps: 1e-3 }.into(),
            LayerKind::Conv { filters: 1, kernel: 1, stride: 1, padding: Padding::Valid, activation: Activation::None }.into(),
        ];
        assert_eq!(layer_names(&layers), ["conv2d", "batch_normalization", "conv2d_1"]);
    }

    #[test]
    fn bottleneck_parameter_ledger() {
        // 64 -> (64, 64, 256) with projection shortcut, hand-summed:
        // reduce 64*(64+1)=4,160; bn 256; 3x3 64*(9*64+1)=36,928; bn 256;
        // expand 256*(64+1)=16,640; bn 1,024; shortcut 16,640; bn 1,024.
        let kind = LayerKind::ResidualBlock { mid: 64, out: 256, stride: 1, momentum: 0.99 };
        let (shape, params) = layer_output(&kind, "block", &[56, 56, 64]).unwrap();
        assert_eq!(shape, vec![56, 56, 256]);
        let (t, n) = count_params(&params);
        assert_eq!(t + n, 4_160 + 256 + 36_928 + 256 + 16_640 + 1_024 + 16_640 + 1_024);
        assert_eq!(n, 2 * (64 + 64 + 256 + 256));
    }

    #[test]
    fn identity_block_has_no_shortcut_params() {
        let kind = LayerKind::ResidualBlock { mid: 16, out: 64, stride: 1, momentum: 0.99 };
        let (_, params) = layer_output(&kind, "b", &[8, 8, 64]).unwrap();
        assert!(params.iter().all(|p| !p.name.contains("shortcut")));
    }

    #[test]
    fn json_round_trip_uses_kind_tags() {
        let spec = LayerSpec::from(LayerKind::MaxPool { pool: 3, stride: 3, padding: Padding::Valid })
            .expecting(&[24, 24, 256]);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"maxpool","pool":3,"stride":3,"padding":"valid","expect":[24,24,256]}"#);
        let back: LayerSpec = serde_json::from_str(r#"{"kind":"conv","filters":8,"kernel":3}"#).unwrap();
        assert!(matches!(back.kind, LayerKind::Conv { stride: 1, padding: Padding::Valid, .. }));
    }

    #[test]
    fn expect_mismatch_names_the_layer() {
        let layers = vec![LayerSpec::from(LayerKind::MaxPool { pool: 2, stride: 2, padding: Padding::Valid })
            .expecting(&[5, 5, 1])];
        let err = shape_pass(&layers, &[8, 8, 1], "").unwrap_err();
        assert!(err.to_string().contains("max_pooling2d"), "{err}");
    }
}
