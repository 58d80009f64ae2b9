//! Labeled image datasets: loading, resizing, splitting and synthesis.

mod dataset;
mod loader;
mod resize;
mod split;
mod synth;

pub use dataset::{LabeledDataset, Sample};
pub use loader::{load_directory_dataset, DecodePolicy, LoadOptions, LoadReport};
pub use resize::resize_bilinear;
pub use split::{
    apply_manifest, split_dataset, stratum_sizes, validate_ratios, DatasetSplit, ManifestEntry,
    SplitManifest, Subset, DEFAULT_RATIOS,
};
pub use synth::{synth_shapes_dataset, synth_shapes_named, SHAPE_CLASSES};
