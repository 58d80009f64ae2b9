use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One image with its class index into the owning dataset's class list.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Stable identity, e.g. the path relative to the dataset root.
    pub id: String,
    pub image: Tensor,
    pub label: usize,
}

/// Images with integer labels over an ordered list of distinct class names.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    classes: Vec<String>,
    samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(classes: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(Error::Data(format!("duplicate class name {c:?}")));
            }
        }
        if let Some(s) = samples.iter().find(|s| s.label >= classes.len()) {
            return Err(Error::Data(format!(
                "sample {} has label {} outside {} classes",
                s.id,
                s.label,
                classes.len()
            )));
        }
        Ok(Self { classes, samples })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn label_name(&self, sample: &Sample) -> &str {
        &self.classes[sample.label]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Shape shared by every image, or `None` when empty or mixed.
    pub fn image_shape(&self) -> Option<&[usize]> {
        let first = self.samples.first()?.image.shape();
        self.samples
            .iter()
            .all(|s| s.image.shape() == first)
            .then_some(first)
    }

    /// Resizes every image to `(height, width)`.
    pub fn resized(&self, size: (usize, usize)) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    id: s.id.clone(),
                    image: super::resize_bilinear(&s.image, size)?,
                    label: s.label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            classes: self.classes.clone(),
            samples,
        })
    }
}
