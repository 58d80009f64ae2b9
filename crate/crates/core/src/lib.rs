//! Two-stage trees of small convolutional classifiers with coarse-to-fine
//! class partitions, a flat multiclass baseline, and the tooling to train,
//! evaluate and compare them reproducibly.

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
