use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ratio::Ratio;
use crate::data::{resize_bilinear, LabeledDataset};
use crate::ensemble::{argmax_scores, EnsembleTree, NodeId, ScoreModel, TreeNode};
use crate::error::{Error, Result};
use crate::model::hex;

/// Identifies a test set by size, class list and a digest of its samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSetId {
    pub samples: usize,
    pub classes: Vec<String>,
    pub fingerprint: String,
}

impl TestSetId {
    pub fn of(dataset: &LabeledDataset) -> Self {
        let mut hasher = Sha256::new();
        for s in dataset.samples() {
            hasher.update(s.id.as_bytes());
            hasher.update([0]);
            hasher.update(dataset.label_name(s).as_bytes());
            hasher.update([0]);
        }
        Self {
            samples: dataset.len(),
            classes: dataset.classes().to_vec(),
            fingerprint: hex(&hasher.finalize()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub accuracy: Ratio,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: NodeId,
    pub depth: usize,
    pub groups: Vec<Vec<String>>,
    /// Accuracy over test samples whose true class reaches this node,
    /// scoring the node on its own.
    pub accuracy: Ratio,
    pub input_size: [usize; 2],
    /// Misclassified samples whose first wrong decision was made here.
    pub first_errors: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub test_set: TestSetId,
    pub accuracy: Ratio,
    pub per_class: Vec<ClassAccuracy>,
    /// Empty for flat classifiers.
    pub nodes: Vec<NodeReport>,
}

impl EvaluationReport {
    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("evaluation report", e.to_string()))
    }

    pub fn misclassified(&self) -> u64 {
        self.accuracy.total - self.accuracy.correct
    }

    pub fn render_text(&self) -> String {
        let a = self.accuracy;
        let mut out = format!(
            "Model\t{}\nAccuracy\t{}\t{}/{}\n\nClass\tAccuracy\tCorrect\n",
            self.model, a, a.correct, a.total
        );
        for c in &self.per_class {
            let r = c.accuracy;
            out.push_str(&format!("{}\t{}\t{}/{}\n", c.class, r, r.correct, r.total));
        }
        if !self.nodes.is_empty() {
            out.push_str("\nNode\tDepth\tGroups\tAccuracy\tSize\tFirst errors\n");
            for n in &self.nodes {
                let groups: Vec<String> = n.groups.iter().map(|g| g.join("+")).collect();
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t({},{})\t{}\n",
                    n.id,
                    n.depth,
                    groups.join(" | "),
                    n.accuracy,
                    n.input_size[0],
                    n.input_size[1],
                    n.first_errors
                ));
            }
        }
        out
    }
}

fn same_classes(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().all(|c| b.contains(c))
}

fn per_class_ratios(test: &LabeledDataset, hits: &[bool]) -> Vec<ClassAccuracy> {
    let mut per = vec![Ratio::default(); test.classes().len()];
    for (s, &hit) in test.samples().iter().zip(hits) {
        per[s.label].record(hit);
    }
    test.classes()
        .iter()
        .zip(per)
        .map(|(class, accuracy)| ClassAccuracy {
            class: class.clone(),
            accuracy,
        })
        .collect()
}

/// Evaluates a flat classifier whose output `i` means `model_classes[i]`.
/// `size` overrides the model's native input size.
pub fn evaluate_flat<M: ScoreModel>(
    name: &str,
    model: &M,
    model_classes: &[String],
    test: &LabeledDataset,
    size: Option<(usize, usize)>,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    if !same_classes(model_classes, test.classes()) || model.output_neurons() != model_classes.len()
    {
        return Err(Error::Config(format!(
            "model classes {model_classes:?} do not match test classes {:?}",
            test.classes()
        )));
    }
    let size = size.unwrap_or_else(|| model.native_size());
    let hits = test
        .samples()
        .iter()
        .map(|s| {
            let scores = model.scores(&resize_bilinear(&s.image, size)?)?;
            Ok(model_classes[argmax_scores(&scores)] == test.label_name(s))
        })
        .collect::<Result<Vec<bool>>>()?;
    let mut accuracy = Ratio::default();
    hits.iter().for_each(|&h| accuracy.record(h));
    Ok(EvaluationReport {
        model: name.to_string(),
        test_set: TestSetId::of(test),
        accuracy,
        per_class: per_class_ratios(test, &hits),
        nodes: Vec::new(),
    })
}

/// Node-local accuracy: samples whose class reaches `node`, each scored at
/// `size` and marked correct when the arg-max group holds the true class.
pub fn node_local_accuracy<M: ScoreModel>(
    tree: &EnsembleTree<M>,
    node: &TreeNode,
    data: &LabeledDataset,
    size: Option<(usize, usize)>,
) -> Result<Ratio> {
    let mut ratio = Ratio::default();
    for s in data.samples() {
        let class = data.label_name(s);
        let Some(truth) = node.partition.group_of(class) else {
            continue;
        };
        let scores = tree.node_scores(node, &s.image, size)?;
        ratio.record(argmax_scores(&scores) == truth);
    }
    Ok(ratio)
}

/// Routes every test sample through the tree and attributes each error to
/// the first node on its path that chose a group without the true class.
pub fn evaluate_ensemble<M: ScoreModel>(
    name: &str,
    tree: &EnsembleTree<M>,
    test: &LabeledDataset,
) -> Result<EvaluationReport> {
    evaluate_ensemble_sized(name, tree, test, None)
}

/// As [`evaluate_ensemble`], with every node forced to `uniform_size` when
/// given.
pub fn evaluate_ensemble_sized<M: ScoreModel>(
    name: &str,
    tree: &EnsembleTree<M>,
    test: &LabeledDataset,
    uniform_size: Option<(usize, usize)>,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let spec = tree.spec();
    if !same_classes(spec.classes(), test.classes()) {
        return Err(Error::Config(format!(
            "tree classes {:?} do not match test classes {:?}",
            spec.classes(),
            test.classes()
        )));
    }
    let nodes = spec.nodes();
    let mut first_errors = vec![0u64; nodes.len()];
    let mut hits = Vec::with_capacity(test.len());
    for s in test.samples() {
        let class = test.label_name(s);
        let trace = tree.route_with_sizes(&s.image, |_| uniform_size)?;
        let hit = trace.predicted == class;
        if !hit {
            let node = trace.first_error(spec, class).ok_or_else(|| {
                Error::State(format!("sample {} misrouted without a wrong node", s.id))
            })?;
            first_errors[node] += 1;
        }
        hits.push(hit);
    }
    let mut accuracy = Ratio::default();
    hits.iter().for_each(|&h| accuracy.record(h));
    let node_reports = nodes
        .iter()
        .map(|node| {
            let (h, w) = uniform_size.unwrap_or_else(|| tree.effective_size(node));
            Ok(NodeReport {
                id: node.id,
                depth: node.depth,
                groups: node.partition.groups().to_vec(),
                accuracy: node_local_accuracy(tree, node, test, uniform_size)?,
                input_size: [h, w],
                first_errors: first_errors[node.id],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        model: name.to_string(),
        test_set: TestSetId::of(test),
        accuracy,
        per_class: per_class_ratios(test, &hits),
        nodes: node_reports,
    })
}
