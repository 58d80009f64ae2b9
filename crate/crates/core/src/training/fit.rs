//! The shared epoch loop: shuffled minibatches, Adam, early stopping and
//! best-epoch restore.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::history::{EarlyStopping, EpochRecord, TrainingHistory, Verdict};
use crate::error::Result;
use crate::numerics::{Activation, Adam, AdamConfig, Sequential, Tensor};

pub(crate) trait Fit {
    type Snapshot;

    fn train_len(&self) -> usize;

    /// Accumulates gradients over `batch`, takes one optimizer step and
    /// returns the summed loss.
    fn train_batch(&mut self, batch: &[usize]) -> Result<f64>;

    /// Mean validation loss and accuracy.
    fn validate(&self) -> Result<(f64, f64)>;

    fn snapshot(&self) -> Self::Snapshot;

    fn restore(&mut self, snapshot: Self::Snapshot);
}

pub(crate) fn fit<F: Fit>(
    model: &mut F,
    batch_size: usize,
    patience: usize,
    max_epochs: usize,
    seed: u64,
) -> Result<TrainingHistory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..model.train_len()).collect();
    let mut stopper = EarlyStopping::new(patience);
    let mut epochs = Vec::new();
    let mut best = None;
    for epoch in 1..=max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            total += model.train_batch(batch)?;
        }
        let (val_loss, val_accuracy) = model.validate()?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / order.len() as f64,
            val_loss,
            val_accuracy,
        });
        match stopper.observe(val_loss) {
            Verdict::Improved => best = Some(model.snapshot()),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    if let Some(snapshot) = best {
        model.restore(snapshot);
    }
    Ok(TrainingHistory {
        stopped_epoch: stopper.epoch(),
        best_epoch: stopper.best_epoch(),
        epochs,
    })
}

/// Head-only training over precomputed backbone features.
pub(crate) struct HeadFit<'a> {
    pub net: &'a mut Sequential,
    pub activation: Activation,
    pub train: &'a [(Tensor, usize)],
    pub val: &'a [(Tensor, usize)],
    pub optimizer: Adam,
}

impl<'a> HeadFit<'a> {
    pub fn new(
        net: &'a mut Sequential,
        activation: Activation,
        train: &'a [(Tensor, usize)],
        val: &'a [(Tensor, usize)],
        adam: AdamConfig,
    ) -> Self {
        let optimizer = Adam::new(net.parameters(), adam);
        Self {
            net,
            activation,
            train,
            val,
            optimizer,
        }
    }
}

pub(crate) fn mean_loss_accuracy(
    samples: impl ExactSizeIterator<Item = Result<(Vec<f32>, usize)>>,
    activation: Activation,
) -> Result<(f64, f64)> {
    let n = samples.len().max(1) as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        let (logits, target) = s?;
        loss += activation.loss_and_grad(&logits, target).0;
        let scores = activation.apply(&logits);
        correct += usize::from(crate::ensemble::argmax_scores(&scores) == target);
    }
    Ok((loss / n, correct as f64 / n))
}

impl Fit for HeadFit<'_> {
    type Snapshot = Sequential;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_batch(&mut self, batch: &[usize]) -> Result<f64> {
        self.net.zero_grad();
        let scale = 1.0 / batch.len() as f32;
        let mut total = 0.0;
        for &i in batch {
            let (features, target) = &self.train[i];
            let logits = self.net.forward_recorded(features)?;
            let (loss, grad) = self.activation.loss_and_grad(logits.data(), *target);
            total += loss;
            let grad = Tensor::vector(grad.into_iter().map(|g| g * scale).collect());
            self.net.backward(&grad, false)?;
        }
        self.optimizer.step(self.net.parameters_mut())?;
        Ok(total)
    }

    fn validate(&self) -> Result<(f64, f64)> {
        let net = &*self.net;
        mean_loss_accuracy(
            self.val
                .iter()
                .map(|(f, t)| Ok((net.forward(f)?.into_data(), *t))),
            self.activation,
        )
    }

    fn snapshot(&self) -> Sequential {
        self.net.clone()
    }

    fn restore(&mut self, snapshot: Sequential) {
        *self.net = snapshot;
    }
}

/// End-to-end training of a backbone and head on raw images.
pub(crate) struct FullFit<'a> {
    pub backbone: &'a mut Sequential,
    pub head: &'a mut Sequential,
    pub activation: Activation,
    pub train: &'a [(&'a Tensor, usize)],
    pub val: &'a [(&'a Tensor, usize)],
    pub backbone_opt: Adam,
    pub head_opt: Adam,
}

impl Fit for FullFit<'_> {
    type Snapshot = (Sequential, Sequential);

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_batch(&mut self, batch: &[usize]) -> Result<f64> {
        self.backbone.zero_grad();
        self.head.zero_grad();
        let scale = 1.0 / batch.len() as f32;
        let mut total = 0.0;
        for &i in batch {
            let (image, target) = self.train[i];
            let features = self.backbone.forward_recorded(image)?;
            let logits = self.head.forward_recorded(&features)?;
            let (loss, grad) = self.activation.loss_and_grad(logits.data(), target);
            total += loss;
            let grad = Tensor::vector(grad.into_iter().map(|g| g * scale).collect());
            if let Some(dfeatures) = self.head.backward(&grad, true)? {
                self.backbone.backward(&dfeatures, false)?;
            }
        }
        self.backbone_opt.step(self.backbone.parameters_mut())?;
        self.head_opt.step(self.head.parameters_mut())?;
        Ok(total)
    }

    fn validate(&self) -> Result<(f64, f64)> {
        let (backbone, head) = (&*self.backbone, &*self.head);
        mean_loss_accuracy(
            self.val.iter().map(|(img, t)| {
                let logits = head.forward(&backbone.forward(img)?)?;
                Ok((logits.into_data(), *t))
            }),
            self.activation,
        )
    }

    fn snapshot(&self) -> Self::Snapshot {
        (self.backbone.clone(), self.head.clone())
    }

    fn restore(&mut self, (backbone, head): Self::Snapshot) {
        *self.backbone = backbone;
        *self.head = head;
    }
}
