use rayon::prelude::*;

use super::config::TrainingConfig;
use super::fit::{fit, HeadFit};
use super::history::TrainingHistory;
use crate::data::{resize_bilinear, DatasetSplit, LabeledDataset, Sample};
use crate::ensemble::{ClassPartition, EnsembleTree, NodeId, TreeSpec};
use crate::error::{Error, Result};
use crate::model::{Backbone, HeadSpec, NodeClassifier};
use crate::numerics::Tensor;

const BASELINE_SALT: u64 = 0xB45E_11E5_0000_0001;

/// Seed for the classifier at `node`, independent of training order.
pub fn node_seed(seed: u64, node: NodeId) -> u64 {
    seed ^ (node as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Keeps samples whose class belongs to `partition` and relabels each with
/// the index of its group. Group `i` is named by joining its classes with `+`.
pub fn relabel_for_node(dataset: &LabeledDataset, partition: &ClassPartition) -> Result<LabeledDataset> {
    let group_of_class: Vec<Option<usize>> = dataset
        .classes()
        .iter()
        .map(|c| partition.group_of(c))
        .collect();
    for class in partition.classes() {
        if dataset.class_index(class).is_none() {
            return Err(Error::Config(format!(
                "partition class {class:?} is not in the dataset"
            )));
        }
    }
    let samples: Vec<Sample> = dataset
        .samples()
        .iter()
        .filter_map(|s| {
            group_of_class[s.label].map(|g| Sample {
                id: s.id.clone(),
                image: s.image.clone(),
                label: g,
            })
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Config(
            "no samples belong to the partition's classes".into(),
        ));
    }
    let names = partition.groups().iter().map(|g| g.join("+")).collect();
    LabeledDataset::new(names, samples)
}

/// Backbone features for every sample, at `size`.
pub(crate) fn extract_features(
    backbone: &Backbone,
    dataset: &LabeledDataset,
    size: (usize, usize),
) -> Result<Vec<(Tensor, usize)>> {
    dataset
        .samples()
        .par_iter()
        .map(|s| {
            let image = resize_bilinear(&s.image, size)?;
            Ok((backbone.features(&image)?, s.label))
        })
        .collect()
}

/// Trains the head of a frozen-backbone classifier, restoring the weights
/// from the epoch with the lowest validation loss.
pub fn train_node(
    classifier: NodeClassifier,
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainingConfig,
) -> Result<(NodeClassifier, TrainingHistory)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sets must be nonempty".into()));
    }
    if !classifier.backbone().is_frozen() {
        return Err(Error::State("freeze the backbone before training a node head".into()));
    }
    let arity = classifier.head_spec().output_neurons;
    if train.classes().len() != arity || val.classes().len() != arity {
        return Err(Error::Config(format!(
            "head has {arity} outputs but the data has {} labels",
            train.classes().len()
        )));
    }
    let (h, w, _) = classifier.input_size();
    let train_feats = extract_features(classifier.backbone(), train, (h, w))?;
    let val_feats = extract_features(classifier.backbone(), val, (h, w))?;
    let batch_size = config.batch_size_for(&train.class_counts());

    let mut classifier = classifier;
    let activation = classifier.head_spec().output_activation;
    let mut run = HeadFit::new(
        classifier.head.net_mut(),
        activation,
        &train_feats,
        &val_feats,
        config.adam(),
    );
    let history = fit(&mut run, batch_size, config.patience, config.max_epochs, config.seed)?;
    classifier.history = Some(history.clone());
    Ok((classifier, history))
}

fn frozen(backbone: &Backbone) -> Backbone {
    let mut b = backbone.clone();
    b.freeze();
    b
}

/// A single n-way classifier on the shared backbone, trained with the same
/// protocol as the ensemble nodes.
pub fn train_flat_baseline(
    splits: &DatasetSplit,
    config: &TrainingConfig,
    backbone: &Backbone,
    hidden_units: usize,
) -> Result<NodeClassifier> {
    let n = splits.train.classes().len();
    let head = HeadSpec::for_arity(hidden_units, n)?;
    let seed = config.seed ^ BASELINE_SALT;
    let clf = NodeClassifier::with_backbone(frozen(backbone), head, seed)?;
    let (clf, _) = train_node(clf, &splits.train, &splits.validation, &config.with_seed(seed))?;
    Ok(clf)
}

/// Trains one classifier per internal node on its relabeled subsets. Nodes
/// train independently and may run in parallel; results depend only on the
/// per-node seeds.
pub fn train_ensemble(
    spec: &TreeSpec,
    splits: &DatasetSplit,
    config: &TrainingConfig,
    backbone: &Backbone,
    hidden_units: usize,
) -> Result<EnsembleTree<NodeClassifier>> {
    train_ensemble_with(spec, splits, config, backbone, hidden_units, train_node)
}

/// [`train_ensemble`] with a caller-supplied node trainer, invoked once per
/// internal node.
pub fn train_ensemble_with<T>(
    spec: &TreeSpec,
    splits: &DatasetSplit,
    config: &TrainingConfig,
    backbone: &Backbone,
    hidden_units: usize,
    trainer: T,
) -> Result<EnsembleTree<NodeClassifier>>
where
    T: Fn(
            NodeClassifier,
            &LabeledDataset,
            &LabeledDataset,
            &TrainingConfig,
        ) -> Result<(NodeClassifier, TrainingHistory)>
        + Sync,
{
    let nodes = spec.nodes();
    let models = nodes
        .par_iter()
        .map(|node| {
            let seed = node_seed(config.seed, node.id);
            let train = relabel_for_node(&splits.train, &node.partition)?;
            let val = relabel_for_node(&splits.validation, &node.partition)?;
            let head = node.head_spec(hidden_units)?;
            let clf = NodeClassifier::with_backbone(frozen(backbone), head, seed)?;
            trainer(clf, &train, &val, &config.with_seed(seed))
                .map(|(clf, _)| clf)
                .map_err(|e| Error::State(format!("training node {} failed: {e}", node.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleTree::new(spec.clone(), models)
}
