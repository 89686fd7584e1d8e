use serde::{Deserialize, Serialize};

use super::branch::BranchConfig;
use super::custom::{desk_custom_config, SequentialConfig};
use super::graph::{ModelConfig, ModelGraph};
use crate::error::Result;
use crate::labels::BranchTask;

/// How the two branch feature maps are combined before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeRule {
    #[default]
    Mean,
    Max,
}

fn default_tau() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Cosine-similarity threshold in [-1, 1].
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub merge: MergeRule,
    /// Shape the projected branch features must have; defaults to the custom
    /// network's shape at the junction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_shape: Option<Vec<usize>>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            tau: default_tau(),
            merge: MergeRule::Mean,
            target_shape: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub custom: SequentialConfig,
    pub branch_ns: BranchConfig,
    pub branch_ct: BranchConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
}

impl HybridConfig {
    pub fn branch(&self, task: BranchTask) -> &BranchConfig {
        match task {
            BranchTask::NormalVsStone => &self.branch_ns,
            BranchTask::CystVsTumor => &self.branch_ct,
        }
    }

    /// Desk-scale hybrid over 64x64 inputs.
    pub fn desk() -> Self {
        HybridConfig {
            custom: desk_custom_config(),
            branch_ns: BranchConfig::desk(BranchTask::NormalVsStone),
            branch_ct: BranchConfig::desk(BranchTask::CystVsTumor),
            fusion: FusionConfig::default(),
        }
    }
}

/// Parameter-name prefixes of the hybrid's components.
pub const CUSTOM_PREFIX: &str = "custom/";
pub const PROJECTION_PREFIX: &str = "projection/";

pub fn branch_prefix(task: BranchTask) -> String {
    format!("{}/", task.slug())
}

/// Assembles a hybrid from already-built components, copying their weights.
pub fn build_hybrid(
    custom: &ModelGraph,
    branch_ns: &ModelGraph,
    branch_ct: &ModelGraph,
    fusion: FusionConfig,
    seed: u64,
) -> Result<ModelGraph> {
    let custom_cfg = custom.config().as_sequential()?.clone();
    let config = HybridConfig {
        custom: custom_cfg,
        branch_ns: branch_ns.config().as_branch()?.clone(),
        branch_ct: branch_ct.config().as_branch()?.clone(),
        fusion,
    };
    let mut graph = ModelGraph::new(ModelConfig::Hybrid(config), seed)?;
    graph.params_mut().load_prefixed(CUSTOM_PREFIX, custom.params())?;
    graph
        .params_mut()
        .load_prefixed(&branch_prefix(BranchTask::NormalVsStone), branch_ns.params())?;
    graph
        .params_mut()
        .load_prefixed(&branch_prefix(BranchTask::CystVsTumor), branch_ct.params())?;
    Ok(graph)
}
