//! Model definitions and the graph executor.

pub mod branch;
pub mod custom;
pub mod graph;
pub mod hybrid;
pub mod layer;
pub mod params;

pub use branch::BranchConfig;
pub use custom::{
    build_custom_cnn, custom_cnn_config, desk_custom_config, full_custom_config, CustomCnnShape, SequentialConfig,
};
pub use graph::{
    BnUpdate, ForwardOptions, ForwardOutput, GraphFile, GraphSummary, ModelConfig, ModelGraph, GRAPH_VERSION,
};
pub use hybrid::{build_hybrid, branch_prefix, FusionConfig, HybridConfig, MergeRule, CUSTOM_PREFIX, PROJECTION_PREFIX};
pub use layer::{Activation, LayerKind, LayerReport, LayerSpec, ParamRole, ParamSpec};
pub use params::{Param, ParamStore};
