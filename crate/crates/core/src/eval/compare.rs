use serde::{Deserialize, Serialize};

use super::ratio::{format_units, Ratio};
use super::report::EvaluationReport;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub class: String,
    pub baseline: Ratio,
    pub ensemble: Ratio,
    pub delta_units: i64,
}

/// Baseline-vs-ensemble accuracy on one test set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset: String,
    pub baseline_model: String,
    pub ensemble_model: String,
    pub test_samples: usize,
    pub baseline: Ratio,
    pub ensemble: Ratio,
    /// Ensemble minus baseline, in 1e-4 units of the rounded accuracies.
    pub delta_units: i64,
    /// Ensemble minus baseline, in correctly classified images.
    pub delta_images: i64,
    pub note: String,
    pub per_class: Vec<ClassComparison>,
}

fn count_note(delta_images: i64) -> String {
    let n = delta_images.unsigned_abs();
    let amount = if n == 1 {
        "only one image".to_string()
    } else {
        format!("{n} images")
    };
    match delta_images.signum() {
        0 => "ensemble and baseline classify the same number of test images".into(),
        1 => format!("ensemble leads baseline by {amount}"),
        _ => format!("ensemble lags behind baseline by {amount}"),
    }
}

/// Checks that both reports describe the same test set and tabulates them.
pub fn compare_report(
    dataset: &str,
    baseline: &EvaluationReport,
    ensemble: &EvaluationReport,
) -> Result<Comparison> {
    let (b, e) = (&baseline.test_set, &ensemble.test_set);
    if b.samples != e.samples || b.classes != e.classes {
        return Err(Error::Contract(format!(
            "reports cover different test sets ({} samples {:?} vs {} samples {:?})",
            b.samples, b.classes, e.samples, e.classes
        )));
    }
    if b.fingerprint != e.fingerprint {
        return Err(Error::Contract(
            "reports come from different splits (test set fingerprints differ)".into(),
        ));
    }
    let per_class = baseline
        .per_class
        .iter()
        .zip(&ensemble.per_class)
        .map(|(pb, pe)| ClassComparison {
            class: pb.class.clone(),
            baseline: pb.accuracy,
            ensemble: pe.accuracy,
            delta_units: pe.accuracy.basis_points() - pb.accuracy.basis_points(),
        })
        .collect();
    let delta_images = ensemble.accuracy.correct as i64 - baseline.accuracy.correct as i64;
    Ok(Comparison {
        dataset: dataset.to_string(),
        baseline_model: baseline.model.clone(),
        ensemble_model: ensemble.model.clone(),
        test_samples: b.samples,
        baseline: baseline.accuracy,
        ensemble: ensemble.accuracy,
        delta_units: ensemble.accuracy.basis_points() - baseline.accuracy.basis_points(),
        delta_images,
        note: count_note(delta_images),
        per_class,
    })
}

impl Comparison {
    pub fn delta(&self) -> String {
        format_units(self.delta_units, true)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "Dataset\t{}\t{}\tDelta\n{}\t{}\t{}\t{}\n",
            self.baseline_model,
            self.ensemble_model,
            self.dataset,
            self.baseline,
            self.ensemble,
            self.delta()
        );
        out.push_str(&format!(
            "Correct\t{}/{}\t{}/{}\t{:+}\n",
            self.baseline.correct,
            self.baseline.total,
            self.ensemble.correct,
            self.ensemble.total,
            self.delta_images
        ));
        out.push_str(&format!("Note: {}\n\nClass\tBaseline\tEnsemble\tDelta\n", self.note));
        for row in &self.per_class {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                row.class,
                row.baseline,
                row.ensemble,
                format_units(row.delta_units, true)
            ));
        }
        out
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("comparison serializes");
        s.push('\n');
        s
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("comparison", e.to_string()))
    }
}
