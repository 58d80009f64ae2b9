//! Accuracy reports, per-node size sweeps and baseline comparisons.

mod compare;
mod ratio;
mod report;
mod sweep;

pub use compare::{compare_report, ClassComparison, Comparison};
pub use ratio::{format_units, Ratio};
pub use report::{
    evaluate_ensemble, evaluate_ensemble_sized, evaluate_flat, node_local_accuracy,
    ClassAccuracy, EvaluationReport, NodeReport, TestSetId,
};
pub use sweep::{
    ensemble_accuracy, format_delta, size_sweep, SizeTable, SizeTableRow, SweepReport, SweepRow,
};
