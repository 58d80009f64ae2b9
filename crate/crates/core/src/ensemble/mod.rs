//! Partition trees, decision-chain routing and per-node size selection.

mod manifest;
mod routing;
mod tree;

pub use manifest::{ManifestNode, TreeManifest, MANIFEST_VERSION};
pub use routing::{
    argmax_scores, select_node_input_size, EnsembleTree, RoutingStep, RoutingTrace, ScoreModel,
};
pub use tree::{
    canonical_four_class, canonical_six_class_s1, canonical_six_class_s2, generic_tree,
    ClassPartition, NodeId, Shape, TreeNode, TreeSpec,
};
