//! Node classifiers: a frozen convolutional backbone with a trainable head.

pub mod checkpoint;
mod classifier;
mod pretrain;

pub use classifier::{
    build_classifier, Backbone, BackboneSpec, ConvBlock, Head, HeadSpec, NodeClassifier,
};
pub(crate) use classifier::hex;
pub use pretrain::shared_pretrain;
