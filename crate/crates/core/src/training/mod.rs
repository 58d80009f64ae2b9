//! Node relabeling, head training with early stopping, and ensemble and
//! baseline orchestration.

mod config;
pub(crate) mod fit;
mod history;
mod node;

pub use config::TrainingConfig;
pub use history::{early_stopping_outcome, EarlyStopping, EpochRecord, TrainingHistory, Verdict};
pub use node::{node_seed, relabel_for_node, train_ensemble, train_ensemble_with, train_flat_baseline, train_node};
