mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cnntree::data::{split_dataset, synth_shapes_dataset, DatasetSplit, LabeledDataset, Subset};
use cnntree::ensemble::{
    canonical_four_class, canonical_six_class_s1, canonical_six_class_s2, ClassPartition, TreeSpec,
};
use cnntree::model::{shared_pretrain, Backbone, BackboneSpec, HeadSpec, NodeClassifier};
use cnntree::numerics::Activation;
use cnntree::training::*;
use cnntree::Error;
use proptest::prelude::*;

fn quick_config(max_epochs: usize, seed: u64) -> TrainingConfig {
    TrainingConfig {
        max_epochs,
        seed,
        ..TrainingConfig::default()
    }
}

fn tiny_spec(size: usize) -> BackboneSpec {
    BackboneSpec::with_filters((size, size, 3), &[4, 8])
}

fn frozen_backbone(size: usize, seed: u64) -> Backbone {
    let mut b = Backbone::new(tiny_spec(size), seed).unwrap();
    b.freeze();
    b
}

fn tiny_split(classes: usize, per_class: usize) -> DatasetSplit {
    let ds = synth_shapes_dataset(classes, per_class, (12, 12), 3).unwrap();
    split_dataset(&ds, [0.5, 0.25, 0.25], 3).unwrap()
}

/// Stopping rule written out directly: strict improvements only, stop once
/// the gap since the last improvement reaches the patience.
fn stopping_oracle(losses: &[f64], patience: usize, cap: usize) -> (usize, usize) {
    let mut best: Option<(usize, f64)> = None;
    let mut epoch = 0;
    for (i, &l) in losses.iter().enumerate().take(cap) {
        epoch = i + 1;
        if best.is_none_or(|(_, b)| l < b) {
            best = Some((epoch, l));
        } else if epoch - best.unwrap().0 >= patience {
            break;
        }
    }
    (epoch, best.map_or(0, |(e, _)| e))
}

proptest! {
    #[test]
    fn early_stopping_invariants(
        losses in prop::collection::vec(prop_oneof![0.0f64..2.0, (0u8..4).prop_map(|v| v as f64 / 4.0)], 1..60),
        patience in 1usize..10,
        cap in 1usize..80,
    ) {
        let (stopped, best) = early_stopping_outcome(&losses, patience, cap);
        prop_assert_eq!((stopped, best), stopping_oracle(&losses, patience, cap));
        prop_assert!(best >= 1 && best <= stopped);
        prop_assert!(stopped - best <= patience);
        let seen = &losses[..stopped];
        let min = seen.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(losses[best - 1], min);
        prop_assert!(seen[..best - 1].iter().all(|&l| l > min), "best is the first minimum");
        if stopped < cap.min(losses.len()) {
            prop_assert_eq!(stopped - best, patience);
        }
    }

    #[test]
    fn relabel_conserves_counts(counts in prop::collection::vec(1usize..6, 4), cut in 1usize..4) {
        let ds = counted(&counts);
        let names: Vec<String> = ds.classes().to_vec();
        let partition = ClassPartition::new(vec![names[..cut].to_vec(), names[cut..].to_vec()]).unwrap();
        let r = relabel_for_node(&ds, &partition).unwrap();
        prop_assert_eq!(r.len(), ds.len());
        let want = vec![counts[..cut].iter().sum::<usize>(), counts[cut..].iter().sum()];
        prop_assert_eq!(r.class_counts(), want);
    }
}

fn counted(counts: &[usize]) -> LabeledDataset {
    use cnntree::data::Sample;
    use cnntree::numerics::Tensor;
    let mut samples = Vec::new();
    for (label, &n) in counts.iter().enumerate() {
        for i in 0..n {
            samples.push(Sample {
                id: format!("{label}/{i}"),
                image: Tensor::zeros(vec![1, 1, 3]),
                label,
            });
        }
    }
    let names = (1..=counts.len()).map(|i| format!("c{i}")).collect();
    LabeledDataset::new(names, samples).unwrap()
}

#[test]
fn stopping_examples() {
    let losses = [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 1.00, 1.01];
    assert_eq!(early_stopping_outcome(&losses, 7, 100), (9, 2));
    let falling: Vec<f64> = (0..120).map(|i| 10.0 - i as f64 * 0.01).collect();
    assert_eq!(early_stopping_outcome(&falling, 7, 100), (100, 100));
}

#[test]
fn relabel_six_class_groups_match_manifest_counts() {
    let split = tiny_split(6, 10);
    let names: Vec<String> = split.train.classes().to_vec();
    let partition = ClassPartition::new(vec![
        vec![names[0].clone(), names[1].clone(), names[2].clone()],
        vec![names[4].clone(), names[5].clone(), names[3].clone()],
    ])
    .unwrap();
    let r = relabel_for_node(&split.train, &partition).unwrap();
    let from_manifest = |group: &[String]| {
        split
            .manifest
            .entries
            .iter()
            .filter(|e| e.subset == Subset::Train && group.contains(&e.class))
            .count()
    };
    let want: Vec<usize> = partition.groups().iter().map(|g| from_manifest(g)).collect();
    assert_eq!(r.class_counts(), want);
}

#[test]
fn batch_size_keys_on_smallest_class() {
    let c = TrainingConfig::default();
    assert_eq!(c.batch_size_for(&[400, 400]), 32);
    assert_eq!(c.batch_size_for(&[900, 399]), 16);
    assert_eq!(c.batch_size_for(&[10, 10, 10]), 16);
}

#[test]
fn config_validation() {
    let bad = [
        TrainingConfig { patience: 0, ..TrainingConfig::default() },
        TrainingConfig { batch_size_small: 0, ..TrainingConfig::default() },
        TrainingConfig { max_epochs: 0, ..TrainingConfig::default() },
        TrainingConfig { learning_rate: -1.0, ..TrainingConfig::default() },
        TrainingConfig { beta2: 1.0, ..TrainingConfig::default() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
    }
    assert!(TrainingConfig::default().validate().is_ok());
}

fn node_data(split: &DatasetSplit) -> (LabeledDataset, LabeledDataset) {
    let names: Vec<String> = split.train.classes().to_vec();
    let p = ClassPartition::new(vec![vec![names[0].clone()], vec![names[1].clone()]]).unwrap();
    (
        relabel_for_node(&split.train, &p).unwrap(),
        relabel_for_node(&split.validation, &p).unwrap(),
    )
}

#[test]
fn training_leaves_frozen_backbone_bytes_unchanged() {
    let split = tiny_split(2, 16);
    let (train, val) = node_data(&split);
    let backbone = frozen_backbone(12, 5);
    let before = backbone.checksum();
    let clf = NodeClassifier::with_backbone(backbone, HeadSpec::for_arity(8, 2).unwrap(), 1).unwrap();
    let (trained, history) = train_node(clf, &train, &val, &quick_config(3, 1)).unwrap();
    assert_eq!(trained.backbone().checksum(), before);
    assert_eq!(history.epochs.len(), history.stopped_epoch);
    assert!(history.stopped_epoch <= 3);
    assert!(trained.is_trained());
}

#[test]
fn freeze_is_idempotent() {
    let clf = NodeClassifier::with_backbone(
        Backbone::new(tiny_spec(12), 2).unwrap(),
        HeadSpec::for_arity(8, 3).unwrap(),
        1,
    )
    .unwrap();
    assert!(!clf.backbone().is_frozen());
    let once = clf.freeze_backbone();
    let twice = once.clone().freeze_backbone();
    assert!(once.backbone().is_frozen());
    assert_eq!(once, twice);
}

#[test]
fn one_step_moves_the_head() {
    let split = tiny_split(2, 16);
    let (train, val) = node_data(&split);
    let clf = NodeClassifier::with_backbone(frozen_backbone(12, 5), HeadSpec::for_arity(8, 2).unwrap(), 1)
        .unwrap();
    let before = clf.head().clone();
    let config = TrainingConfig {
        batch_size_small: train.len(),
        ..quick_config(1, 1)
    };
    let (after, _) = train_node(clf, &train, &val, &config).unwrap();
    assert_ne!(after.head(), &before);
}

#[test]
fn train_node_preconditions() {
    let split = tiny_split(3, 8);
    let (train, val) = node_data(&split);
    let head2 = HeadSpec::for_arity(8, 2).unwrap();
    let unfrozen =
        NodeClassifier::with_backbone(Backbone::new(tiny_spec(12), 2).unwrap(), head2, 1).unwrap();
    assert!(matches!(
        train_node(unfrozen, &train, &val, &quick_config(1, 0)),
        Err(Error::State(_))
    ));
    let three = NodeClassifier::with_backbone(frozen_backbone(12, 2), HeadSpec::for_arity(8, 3).unwrap(), 1)
        .unwrap();
    assert!(matches!(
        train_node(three, &train, &val, &quick_config(1, 0)),
        Err(Error::Config(_))
    ));
    let clf = NodeClassifier::with_backbone(frozen_backbone(12, 2), head2, 1).unwrap();
    let empty = LabeledDataset::new(train.classes().to_vec(), vec![]).unwrap();
    assert!(matches!(
        train_node(clf, &empty, &val, &quick_config(1, 0)),
        Err(Error::Data(_))
    ));
}

fn best_val_accuracy(history: &TrainingHistory) -> f64 {
    history.epochs[history.best_epoch - 1].val_accuracy
}

#[test]
fn separable_blobs_learned_by_head() {
    let ds = common::color_blobs(200, 12, 9);
    let split = split_dataset(&ds, [0.5, 0.25, 0.25], 9).unwrap();
    let clf = NodeClassifier::with_backbone(frozen_backbone(12, 4), HeadSpec::for_arity(8, 2).unwrap(), 3)
        .unwrap();
    let (_, history) =
        train_node(clf, &split.train, &split.validation, &quick_config(30, 3)).unwrap();
    assert!(history.stopped_epoch <= 30);
    let acc = best_val_accuracy(&history);
    assert!(acc >= 0.95, "validation accuracy {acc}\n{}", history.render_log());
}

#[test]
fn pretraining_separable_blobs() {
    let ds = common::color_blobs(200, 12, 21);
    let split = split_dataset(&ds, [0.5, 0.25, 0.25], 21).unwrap();
    let config = quick_config(30, 6);
    let (backbone, history) =
        shared_pretrain(&tiny_spec(12), &split.train, &split.validation, &config, 8).unwrap();
    assert!(backbone.is_frozen());
    let acc = best_val_accuracy(&history);
    assert!(acc >= 0.95, "validation accuracy {acc}\n{}", history.render_log());

    let (again, _) =
        shared_pretrain(&tiny_spec(12), &split.train, &split.validation, &config, 8).unwrap();
    assert_eq!(again.checksum(), backbone.checksum());

    let empty = LabeledDataset::new(ds.classes().to_vec(), vec![]).unwrap();
    assert!(shared_pretrain(&tiny_spec(12), &empty, &split.validation, &config, 8).is_err());
}

/// Wraps `train_node`, recording each call's head arity and confirming the
/// backbone it was handed comes back untouched.
fn counting_train(
    spec: &TreeSpec,
    split: &DatasetSplit,
    backbone: &Backbone,
) -> (usize, Vec<usize>) {
    let calls = AtomicUsize::new(0);
    let arities = Mutex::new(Vec::new());
    let checksum = backbone.checksum();
    let trainer = |clf: NodeClassifier,
                   train: &LabeledDataset,
                   val: &LabeledDataset,
                   config: &TrainingConfig| {
        calls.fetch_add(1, Ordering::SeqCst);
        arities.lock().unwrap().push(clf.head_spec().output_neurons);
        let out = train_node(clf, train, val, config)?;
        assert_eq!(out.0.backbone().checksum(), checksum);
        Ok(out)
    };
    let tree =
        train_ensemble_with(spec, split, &quick_config(2, 4), backbone, 8, trainer).unwrap();
    assert!(tree.models().iter().all(|m| m.is_trained()));
    let mut a = arities.into_inner().unwrap();
    a.sort_unstable();
    (calls.into_inner(), a)
}

#[test]
fn node_training_counts_per_structure() {
    let backbone = frozen_backbone(12, 8);
    let four = tiny_split(4, 8);
    let six = tiny_split(6, 8);
    let c4 = four.train.classes().to_vec();
    let c6 = six.train.classes().to_vec();
    assert_eq!(
        counting_train(&canonical_four_class(&c4).unwrap(), &four, &backbone),
        (3, vec![2, 2, 2])
    );
    assert_eq!(
        counting_train(&canonical_six_class_s1(&c6).unwrap(), &six, &backbone),
        (4, vec![2, 2, 2, 3])
    );
    assert_eq!(
        counting_train(&canonical_six_class_s2(&c6).unwrap(), &six, &backbone),
        (3, vec![2, 3, 3])
    );
}

#[test]
fn nodes_train_independently_of_order() {
    let split = tiny_split(4, 8);
    let backbone = frozen_backbone(12, 8);
    let spec = canonical_four_class(split.train.classes()).unwrap();
    let config = quick_config(3, 17);
    let tree = train_ensemble(&spec, &split, &config, &backbone, 8).unwrap();
    let again = train_ensemble(&spec, &split, &config, &backbone, 8).unwrap();
    for node in spec.nodes().into_iter().rev() {
        let seed = node_seed(config.seed, node.id);
        let train = relabel_for_node(&split.train, &node.partition).unwrap();
        let val = relabel_for_node(&split.validation, &node.partition).unwrap();
        let clf = NodeClassifier::with_backbone(backbone.clone(), node.head_spec(8).unwrap(), seed)
            .unwrap();
        let (alone, _) = train_node(clf, &train, &val, &config.with_seed(seed)).unwrap();
        assert_eq!(alone.to_checkpoint(), tree.model(node.id).to_checkpoint());
        assert_eq!(again.model(node.id).to_checkpoint(), tree.model(node.id).to_checkpoint());
    }
}

#[test]
fn baseline_heads_follow_class_count() {
    let backbone = frozen_backbone(12, 8);
    let four = tiny_split(4, 8);
    let base = train_flat_baseline(&four, &quick_config(2, 1), &backbone, 8).unwrap();
    assert_eq!(base.head_spec().output_neurons, 4);
    assert_eq!(base.head_spec().output_activation, Activation::Softmax);
    assert_eq!(base.backbone().checksum(), backbone.checksum());

    let two = tiny_split(2, 8);
    let base = train_flat_baseline(&two, &quick_config(2, 1), &backbone, 8).unwrap();
    assert_eq!(base.head_spec().output_neurons, 2);
    assert_eq!(base.head_spec().output_activation, Activation::Sigmoid);

    let spec = canonical_four_class(four.train.classes()).unwrap();
    let tree = train_ensemble(&spec, &four, &quick_config(2, 1), &backbone, 8).unwrap();
    for m in tree.models() {
        assert_eq!(m.backbone().to_checkpoint(), backbone.to_checkpoint());
    }
}

#[test]
fn log_round_trip_keeps_logged_precision() {
    let split = tiny_split(2, 16);
    let (train, val) = node_data(&split);
    let clf = NodeClassifier::with_backbone(frozen_backbone(12, 5), HeadSpec::for_arity(8, 2).unwrap(), 1)
        .unwrap();
    let (_, history) = train_node(clf, &train, &val, &quick_config(4, 2)).unwrap();
    let log = history.render_log();
    let parsed = TrainingHistory::parse_log(&log).unwrap();
    assert_eq!(parsed.render_log(), log);
    assert_eq!((parsed.stopped_epoch, parsed.best_epoch), (history.stopped_epoch, history.best_epoch));
    assert!(TrainingHistory::parse_log("1\t0.5\n").is_err());
}
