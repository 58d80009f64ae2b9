//! Decision-chain inference over a trained partition tree.

use super::tree::{NodeId, TreeNode, TreeSpec};
use crate::data::resize_bilinear;
use crate::error::{Error, Result};
use crate::model::NodeClassifier;
use crate::numerics::Tensor;

/// Anything that turns an image into one score per output group.
pub trait ScoreModel {
    fn output_neurons(&self) -> usize;

    /// `(height, width)` used when the tree does not pin a size.
    fn native_size(&self) -> (usize, usize);

    fn is_trained(&self) -> bool {
        true
    }

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>>;
}

impl ScoreModel for NodeClassifier {
    fn output_neurons(&self) -> usize {
        self.head_spec().output_neurons
    }

    fn native_size(&self) -> (usize, usize) {
        let (h, w, _) = self.input_size();
        (h, w)
    }

    fn is_trained(&self) -> bool {
        NodeClassifier::is_trained(self)
    }

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        self.predict_any_size(image)
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn output_neurons(&self) -> usize {
        (**self).output_neurons()
    }
    fn native_size(&self) -> (usize, usize) {
        (**self).native_size()
    }
    fn is_trained(&self) -> bool {
        (**self).is_trained()
    }
    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        (**self).scores(image)
    }
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax_scores(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

/// A partition tree with one model per internal node, indexed by node id.
#[derive(Clone, Debug)]
pub struct EnsembleTree<M> {
    spec: TreeSpec,
    models: Vec<M>,
}

impl<M: ScoreModel> EnsembleTree<M> {
    pub fn new(spec: TreeSpec, models: Vec<M>) -> Result<Self> {
        let nodes = spec.nodes();
        if nodes.len() != models.len() {
            return Err(Error::Config(format!(
                "tree has {} internal nodes but {} models were given",
                nodes.len(),
                models.len()
            )));
        }
        for (node, model) in nodes.iter().zip(&models) {
            if model.output_neurons() != node.arity() {
                return Err(Error::Config(format!(
                    "node {} has {} groups but its model has {} outputs",
                    node.id,
                    node.arity(),
                    model.output_neurons()
                )));
            }
        }
        Ok(Self { spec, models })
    }

    pub fn spec(&self) -> &TreeSpec {
        &self.spec
    }

    pub fn models(&self) -> &[M] {
        &self.models
    }

    pub fn model(&self, id: NodeId) -> &M {
        &self.models[id]
    }

    pub fn into_parts(self) -> (TreeSpec, Vec<M>) {
        (self.spec, self.models)
    }

    /// Pins a node's test-time input size.
    pub fn set_input_size(&mut self, id: NodeId, size: Option<(usize, usize)>) -> Result<()> {
        let node = self
            .spec
            .node_mut(id)
            .ok_or_else(|| Error::Config(format!("no node with id {id}")))?;
        node.input_size = size;
        Ok(())
    }

    /// Size an image is resized to before `node` scores it.
    pub fn effective_size(&self, node: &TreeNode) -> (usize, usize) {
        node.input_size
            .unwrap_or_else(|| self.models[node.id].native_size())
    }

    /// Scores one node on `image`, resizing to `size` (or the node's
    /// effective size).
    pub fn node_scores(
        &self,
        node: &TreeNode,
        image: &Tensor,
        size: Option<(usize, usize)>,
    ) -> Result<Vec<f64>> {
        let model = &self.models[node.id];
        if !model.is_trained() {
            return Err(Error::State(format!("node {} has not been trained", node.id)));
        }
        let size = size.unwrap_or_else(|| self.effective_size(node));
        let resized = resize_bilinear(image, size)?;
        let scores = model.scores(&resized)?;
        if scores.len() != node.arity() {
            return Err(Error::shape(
                "route",
                format!(
                    "node {} returned {} scores for {} groups",
                    node.id,
                    scores.len(),
                    node.arity()
                ),
            ));
        }
        Ok(scores)
    }

    /// Walks from the root, taking the arg-max group at each node until a
    /// single-class group is reached.
    pub fn route(&self, image: &Tensor) -> Result<RoutingTrace> {
        self.route_with_sizes(image, |_| None)
    }

    /// Like [`route`](Self::route) with a per-node size override.
    pub fn route_with_sizes(
        &self,
        image: &Tensor,
        size_of: impl Fn(&TreeNode) -> Option<(usize, usize)>,
    ) -> Result<RoutingTrace> {
        let mut steps = Vec::new();
        let mut node = self.spec.root();
        loop {
            let scores = self.node_scores(node, image, size_of(node))?;
            let group = argmax_scores(&scores);
            steps.push(RoutingStep {
                node: node.id,
                scores,
                group,
            });
            match &node.children[group] {
                Some(child) => node = child,
                None => {
                    return Ok(RoutingTrace {
                        steps,
                        predicted: node.partition.groups()[group][0].clone(),
                    })
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingStep {
    pub node: NodeId,
    pub scores: Vec<f64>,
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingTrace {
    pub steps: Vec<RoutingStep>,
    pub predicted: String,
}

impl RoutingTrace {
    /// First step whose chosen group does not contain `true_class`.
    pub fn first_error(&self, spec: &TreeSpec, true_class: &str) -> Option<NodeId> {
        self.steps.iter().find_map(|step| {
            let node = spec.node(step.node)?;
            (node.partition.group_of(true_class) != Some(step.group)).then_some(step.node)
        })
    }
}

/// Picks the candidate with the best validation accuracy; ties go to the
/// smaller size (by area, then height).
pub fn select_node_input_size(
    accuracies: &[((usize, usize), f64)],
) -> Result<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for &(size, acc) in accuracies {
        best = match best {
            None => Some((size, acc)),
            Some((bs, ba)) => {
                let smaller = (size.0 * size.1, size.0) < (bs.0 * bs.1, bs.0);
                if acc > ba || (acc == ba && smaller) {
                    Some((size, acc))
                } else {
                    Some((bs, ba))
                }
            }
        };
    }
    best.map(|(s, _)| s)
        .ok_or_else(|| Error::Config("no candidate sizes to select from".into()))
}
