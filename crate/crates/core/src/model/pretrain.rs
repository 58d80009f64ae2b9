use super::classifier::{Backbone, BackboneSpec, Head, HeadSpec};
use crate::data::{resize_bilinear, LabeledDataset};
use crate::error::{Error, Result};
use crate::numerics::{Adam, Tensor};
use crate::training::fit::{fit, FullFit};
use crate::training::{TrainingConfig, TrainingHistory};

/// Trains a backbone end to end on all classes with a throwaway multiclass
/// head, then returns it frozen for reuse by every node and the baseline.
pub fn shared_pretrain(
    spec: &BackboneSpec,
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainingConfig,
    hidden_units: usize,
) -> Result<(Backbone, TrainingHistory)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("pretraining needs nonempty training and validation sets".into()));
    }
    let mut backbone = Backbone::new(spec.clone(), config.seed)?;
    let head_spec = HeadSpec::for_arity(hidden_units, train.classes().len())?;
    let mut head = Head::new(head_spec, spec.feature_dim(), config.seed.wrapping_add(1))?;

    let (h, w, _) = spec.input_size;
    let prepare = |d: &LabeledDataset| -> Result<Vec<(Tensor, usize)>> {
        d.samples()
            .iter()
            .map(|s| Ok((resize_bilinear(&s.image, (h, w))?, s.label)))
            .collect()
    };
    let train_images = prepare(train)?;
    let val_images = prepare(val)?;
    let train_refs: Vec<(&Tensor, usize)> = train_images.iter().map(|(t, l)| (t, *l)).collect();
    let val_refs: Vec<(&Tensor, usize)> = val_images.iter().map(|(t, l)| (t, *l)).collect();

    let batch_size = config.batch_size_for(&train.class_counts());
    let backbone_opt = Adam::new(backbone.net().parameters(), config.adam());
    let head_opt = Adam::new(head.net().parameters(), config.adam());
    let mut run = FullFit {
        backbone: backbone.net_mut(),
        head: head.net_mut(),
        activation: head_spec.output_activation,
        train: &train_refs,
        val: &val_refs,
        backbone_opt,
        head_opt,
    };
    let history = fit(&mut run, batch_size, config.patience, config.max_epochs, config.seed)?;
    backbone.freeze();
    Ok((backbone, history))
}
