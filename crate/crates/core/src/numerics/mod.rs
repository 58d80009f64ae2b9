//! Tensors, layers, losses, reverse-mode gradients and Adam.

pub mod activation;
pub mod adam;
pub mod layers;
pub mod network;
pub mod tensor;

pub use activation::{
    binary_cross_entropy, categorical_cross_entropy, sigmoid, softmax, Activation, PROB_EPSILON,
};
pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use layers::{
    conv2d_forward, dense_forward, global_avg_pool, maxpool2d, relu, Conv2d, Dense, MaxPool2d,
    Padding, Parameter,
};
pub use network::{Layer, Sequential};
pub use tensor::{argmax, Tensor};
