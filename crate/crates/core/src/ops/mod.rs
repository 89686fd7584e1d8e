//! Layer primitives. Each module provides a plain forward kernel and a
//! [`Tape`](crate::autodiff::Tape) method that records it with its backward rule.

mod activation;
mod conv;
mod dense;
mod elementwise;
mod fusion;
mod loss;
mod norm;
mod pool;
mod resize;

pub use activation::{dropout_mask, softmax_rows};
pub use conv::{conv2d_forward, conv2d_param_count};
pub use dense::{dense_forward, dense_param_count};
pub use fusion::{intersect_features, IntersectMask};
pub use loss::{cross_entropy, softmax_cross_entropy_grad, PROB_FLOOR};
pub use norm::{batchnorm_infer_forward, batchnorm_train_forward, BatchStats};
pub use pool::maxpool2d_forward;
pub use resize::bilinear_resize_hwc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

/// Output extent and leading pad of a sliding window along one axis.
///
/// `valid`: `floor((size - window) / stride) + 1`, no padding.
/// `same`: `ceil(size / stride)`, padding split with the extra cell at the end.
pub fn window_extent(
    size: usize,
    window: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    if window == 0 {
        return Err(Error::Config("window size must be positive".into()));
    }
    match padding {
        Padding::Valid => {
            if window > size {
                return Err(Error::Shape(format!(
                    "window {window} larger than spatial extent {size}"
                )));
            }
            Ok(((size - window) / stride + 1, 0))
        }
        Padding::Same => {
            let out = size.div_ceil(stride);
            let total = ((out - 1) * stride + window).saturating_sub(size);
            Ok((out, total / 2))
        }
    }
}
