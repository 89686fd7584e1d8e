//! Confusion matrices, metrics, feature extraction and PCA.

pub mod features;
pub mod metrics;
pub mod pca;

pub use features::{evaluate, extract_features, predict_probs, EvalReport, FeatureTap};
pub use metrics::{confusion, metrics, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use pca::{apply_sign_convention, pca2, scatter_csv, Matrix, PcaProjection, SignConvention};
