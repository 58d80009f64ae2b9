//! JSON tree manifest: nested groups with per-node checkpoint and size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tree::{ClassPartition, NodeId, TreeNode, TreeSpec};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeManifest {
    pub version: u32,
    pub classes: Vec<String>,
    pub root: ManifestNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestNode {
    pub groups: Vec<Vec<String>>,
    pub input_size: Option<[usize; 2]>,
    pub checkpoint: Option<String>,
    pub children: Vec<Option<ManifestNode>>,
}

impl TreeManifest {
    /// Describes `spec`, attaching `checkpoints[id]` to each node.
    pub fn from_spec(spec: &TreeSpec, checkpoints: &BTreeMap<NodeId, String>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            classes: spec.classes().to_vec(),
            root: describe(spec.root(), checkpoints),
        }
    }

    /// Rebuilds the tree and the node-id to checkpoint mapping.
    pub fn to_spec(&self) -> Result<(TreeSpec, BTreeMap<NodeId, String>)> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::format(
                "tree manifest",
                format!("unsupported version {}", self.version),
            ));
        }
        let mut next = 0;
        let mut checkpoints = BTreeMap::new();
        let root = rebuild(&self.root, 0, &mut next, &mut checkpoints)?;
        Ok((TreeSpec::from_root(self.classes.clone(), root)?, checkpoints))
    }

    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("tree manifest", e.to_string()))
    }
}

fn describe(node: &TreeNode, checkpoints: &BTreeMap<NodeId, String>) -> ManifestNode {
    ManifestNode {
        groups: node.partition.groups().to_vec(),
        input_size: node.input_size.map(|(h, w)| [h, w]),
        checkpoint: checkpoints.get(&node.id).cloned(),
        children: node
            .children
            .iter()
            .map(|c| c.as_ref().map(|c| describe(c, checkpoints)))
            .collect(),
    }
}

fn rebuild(
    node: &ManifestNode,
    depth: usize,
    next: &mut NodeId,
    checkpoints: &mut BTreeMap<NodeId, String>,
) -> Result<TreeNode> {
    let id = *next;
    *next += 1;
    if let Some(path) = &node.checkpoint {
        checkpoints.insert(id, path.clone());
    }
    let mut children = Vec::with_capacity(node.children.len());
    for child in &node.children {
        children.push(match child {
            Some(c) => Some(rebuild(c, depth + 1, next, checkpoints)?),
            None => None,
        });
    }
    Ok(TreeNode {
        id,
        depth,
        partition: ClassPartition::new(node.groups.clone())?,
        input_size: node.input_size.map(|[h, w]| (h, w)),
        children,
    })
}
