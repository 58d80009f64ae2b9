use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint;
use crate::error::{Error, Result};
use crate::numerics::layers::conv_geometry;
use crate::numerics::{Activation, Conv2d, Dense, Layer, MaxPool2d, Padding, Sequential, Tensor};
use crate::training::TrainingHistory;

/// One convolution block: same-padded conv, ReLU, then optional max pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    /// Pooling window (and stride); 0 or 1 disables pooling.
    #[serde(default)]
    pub pool: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    /// `(height, width, channels)` the classifiers are trained at.
    pub input_size: (usize, usize, usize),
    pub conv_blocks: Vec<ConvBlock>,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self::with_filters((32, 32, 3), &[16, 32, 64])
    }
}

impl BackboneSpec {
    /// 3x3 kernels, stride 1, 2x2 pooling after every block.
    pub fn with_filters(input_size: (usize, usize, usize), filters: &[usize]) -> Self {
        Self {
            input_size,
            conv_blocks: filters
                .iter()
                .map(|&filters| ConvBlock {
                    filters,
                    kernel: 3,
                    stride: 1,
                    pool: 2,
                })
                .collect(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.conv_blocks
            .last()
            .map_or(self.input_size.2, |b| b.filters)
    }

    /// Spatial extent of the final feature map for an `(h, w)` input.
    pub fn feature_extent(&self, (h, w): (usize, usize)) -> Result<(usize, usize)> {
        let mut extent = (h, w);
        for (i, block) in self.conv_blocks.iter().enumerate() {
            if block.filters == 0 || block.kernel == 0 || block.stride == 0 {
                return Err(Error::Config(format!(
                    "conv block {i} needs positive filters, kernel and stride"
                )));
            }
            let oh = conv_geometry(extent.0, block.kernel, block.stride, Padding::Same)?.0;
            let ow = conv_geometry(extent.1, block.kernel, block.stride, Padding::Same)?.0;
            extent = (oh, ow);
            if block.pool > 1 {
                if block.pool > extent.0 || block.pool > extent.1 {
                    return Err(Error::Config(format!(
                        "input {h}x{w} shrinks below the pool window at block {i}"
                    )));
                }
                extent = (
                    (extent.0 - block.pool) / block.pool + 1,
                    (extent.1 - block.pool) / block.pool + 1,
                );
            }
        }
        Ok(extent)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input_size;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config("backbone input_size must be positive".into()));
        }
        self.feature_extent((h, w)).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub hidden_units: usize,
    pub output_neurons: usize,
    pub output_activation: Activation,
}

impl HeadSpec {
    /// Head with the activation implied by the output arity.
    pub fn for_arity(hidden_units: usize, output_neurons: usize) -> Result<Self> {
        let output_activation = Activation::for_arity(output_neurons).ok_or_else(|| {
            Error::Config(format!(
                "a head needs at least 2 output neurons, got {output_neurons}"
            ))
        })?;
        Ok(Self {
            hidden_units,
            output_neurons,
            output_activation,
        })
    }

    /// Sigmoid iff exactly two outputs, softmax iff more.
    pub fn validate(&self) -> Result<()> {
        match Activation::for_arity(self.output_neurons) {
            Some(expected) if expected == self.output_activation => Ok(()),
            Some(expected) => Err(Error::Config(format!(
                "a {}-neuron head must use {expected:?}, not {:?}",
                self.output_neurons, self.output_activation
            ))),
            None => Err(Error::Config(format!(
                "a head needs at least 2 output neurons, got {}",
                self.output_neurons
            ))),
        }
    }
}

/// The convolutional feature extractor, ending in global average pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    spec: BackboneSpec,
    net: Sequential,
}

impl Backbone {
    pub fn new(spec: BackboneSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut channels = spec.input_size.2;
        for block in &spec.conv_blocks {
            layers.push(Layer::Conv2d(Conv2d::init(
                block.kernel,
                channels,
                block.filters,
                block.stride,
                Padding::Same,
                &mut rng,
            )));
            layers.push(Layer::Relu);
            if block.pool > 1 {
                layers.push(Layer::MaxPool2d(MaxPool2d {
                    window: block.pool,
                    stride: block.pool,
                }));
            }
            channels = block.filters;
        }
        layers.push(Layer::GlobalAvgPool);
        Ok(Self {
            spec,
            net: Sequential::new(layers),
        })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn net(&self) -> &Sequential {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    /// Pooled feature vector for an image of any supported spatial size.
    pub fn features(&self, image: &Tensor) -> Result<Tensor> {
        let (h, w, c) = image.dims3()?;
        if c != self.spec.input_size.2 {
            return Err(Error::shape(
                "backbone",
                format!("image has {c} channels, backbone expects {}", self.spec.input_size.2),
            ));
        }
        self.spec.feature_extent((h, w))?;
        self.net.forward(image)
    }

    pub fn freeze(&mut self) {
        self.net.set_trainable(false);
    }

    pub fn is_frozen(&self) -> bool {
        self.net.parameters().iter().all(|p| !p.trainable)
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        checkpoint::encode_tensors(self.net.parameters().into_iter().map(|p| &p.value))
    }

    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<()> {
        let tensors = checkpoint::decode_tensors(bytes)?;
        checkpoint::assign_tensors(
            self.net.parameters_mut().into_iter().map(|p| &mut p.value),
            tensors,
        )
    }

    /// SHA-256 over the serialized parameter values.
    pub fn checksum(&self) -> String {
        hex(&Sha256::digest(self.to_checkpoint()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The trainable end layers: optional hidden ReLU layer plus the output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    spec: HeadSpec,
    net: Sequential,
}

impl Head {
    pub fn new(spec: HeadSpec, inputs: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = if spec.hidden_units == 0 {
            vec![Layer::Dense(Dense::init(inputs, spec.output_neurons, &mut rng))]
        } else {
            vec![
                Layer::Dense(Dense::init(inputs, spec.hidden_units, &mut rng)),
                Layer::Relu,
                Layer::Dense(Dense::init(spec.hidden_units, spec.output_neurons, &mut rng)),
            ]
        };
        Ok(Self {
            spec,
            net: Sequential::new(layers),
        })
    }

    pub fn spec(&self) -> &HeadSpec {
        &self.spec
    }

    pub fn net(&self) -> &Sequential {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    pub fn logits(&self, features: &Tensor) -> Result<Tensor> {
        self.net.forward(features)
    }

    pub fn scores(&self, features: &Tensor) -> Result<Vec<f64>> {
        Ok(self.spec.output_activation.apply(self.logits(features)?.data()))
    }
}

/// A backbone plus augmented head, classifying one tree node's groups (or
/// all classes, for the flat baseline).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeClassifier {
    pub(crate) backbone: Backbone,
    pub(crate) head: Head,
    pub(crate) history: Option<TrainingHistory>,
}

/// Fresh classifier with seeded backbone and head parameters.
pub fn build_classifier(backbone: &BackboneSpec, head: HeadSpec, seed: u64) -> Result<NodeClassifier> {
    let backbone = Backbone::new(backbone.clone(), seed)?;
    NodeClassifier::with_backbone(backbone, head, seed.wrapping_add(1))
}

impl NodeClassifier {
    /// Attaches a new head to an existing (typically pretrained) backbone.
    pub fn with_backbone(backbone: Backbone, head: HeadSpec, seed: u64) -> Result<Self> {
        let head = Head::new(head, backbone.spec().feature_dim(), seed)?;
        Ok(Self {
            backbone,
            head,
            history: None,
        })
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_spec(&self) -> &HeadSpec {
        &self.head.spec
    }

    pub fn input_size(&self) -> (usize, usize, usize) {
        self.backbone.spec.input_size
    }

    pub fn history(&self) -> Option<&TrainingHistory> {
        self.history.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.history.is_some()
    }

    /// Marks the classifier as trained, e.g. after restoring a checkpoint.
    pub fn set_history(&mut self, history: TrainingHistory) {
        self.history = Some(history);
    }

    pub fn freeze_backbone(mut self) -> Self {
        self.backbone.freeze();
        self
    }

    /// Final-layer scores for an image at exactly the training input size.
    pub fn predict(&self, image: &Tensor) -> Result<Vec<f64>> {
        let (h, w, c) = image.dims3()?;
        if (h, w, c) != self.input_size() {
            return Err(Error::shape(
                "predict",
                format!(
                    "image is {h}x{w}x{c}, classifier expects {:?}",
                    self.input_size()
                ),
            ));
        }
        self.predict_any_size(image)
    }

    /// Scores for an image of any spatial size the backbone supports.
    pub fn predict_any_size(&self, image: &Tensor) -> Result<Vec<f64>> {
        self.head.scores(&self.backbone.features(image)?)
    }

    /// Backbone tensors followed by head tensors.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        checkpoint::encode_tensors(
            self.backbone
                .net
                .parameters()
                .into_iter()
                .chain(self.head.net.parameters())
                .map(|p| &p.value),
        )
    }

    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<()> {
        let tensors = checkpoint::decode_tensors(bytes)?;
        checkpoint::assign_tensors(
            self.backbone
                .net
                .parameters_mut()
                .into_iter()
                .chain(self.head.net.parameters_mut())
                .map(|p| &mut p.value),
            tensors,
        )
    }
}
