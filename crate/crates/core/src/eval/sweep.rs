use serde::{Deserialize, Serialize};

use super::ratio::{format_units, Ratio};
use super::report::node_local_accuracy;
use crate::data::LabeledDataset;
use crate::ensemble::{select_node_input_size, EnsembleTree, NodeId, ScoreModel};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub node: NodeId,
    pub groups: Vec<Vec<String>>,
    /// One entry per candidate, in candidate order.
    pub accuracies: Vec<Ratio>,
    pub committed: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub candidates: Vec<[usize; 2]>,
    pub rows: Vec<SweepRow>,
    /// Whole-ensemble validation accuracy with every node at one candidate.
    pub uniform: Vec<Ratio>,
    /// Whole-ensemble validation accuracy with the committed sizes.
    pub specific: Ratio,
}

impl SweepReport {
    pub fn best_uniform(&self) -> Ratio {
        let mut iter = self.uniform.iter().copied();
        let first = iter.next().unwrap_or_default();
        iter.fold(first, |a, b| if frac_gt(b, a) { b } else { a })
    }

    /// Whether the committed sizes do at least as well as every uniform size.
    pub fn specific_at_least_uniform(&self) -> bool {
        !frac_gt(self.best_uniform(), self.specific)
    }

    /// Whether each committed size is the arg-max of its row under the
    /// selection tie rule.
    pub fn commits_match_argmax(&self) -> bool {
        self.rows.iter().all(|row| {
            let scored: Vec<((usize, usize), f64)> = self
                .candidates
                .iter()
                .map(|c| (c[0], c[1]))
                .zip(row.accuracies.iter().map(|a| a.value()))
                .collect();
            select_node_input_size(&scored).ok().map(|(h, w)| [h, w]) == Some(row.committed)
        })
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep serializes");
        s.push('\n');
        s
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("sweep report", e.to_string()))
    }

    /// Node-by-candidate grid of node-local validation accuracies.
    pub fn render_text(&self) -> String {
        let mut out = String::from("Node\tGroups");
        for c in &self.candidates {
            out.push_str(&format!("\t({},{})", c[0], c[1]));
        }
        out.push_str("\tCommitted\n");
        for row in &self.rows {
            let groups: Vec<String> = row.groups.iter().map(|g| g.join("+")).collect();
            out.push_str(&format!("{}\t{}", row.node, groups.join(" | ")));
            for acc in &row.accuracies {
                out.push_str(&format!("\t{acc}"));
            }
            out.push_str(&format!("\t({},{})\n", row.committed[0], row.committed[1]));
        }
        for (c, acc) in self.candidates.iter().zip(&self.uniform) {
            out.push_str(&format!("uniform ({},{})\t{}\n", c[0], c[1], acc));
        }
        out.push_str(&format!("specific\t{}\n", self.specific));
        out
    }
}

fn frac_gt(a: Ratio, b: Ratio) -> bool {
    (a.correct as u128) * (b.total as u128) > (b.correct as u128) * (a.total as u128)
}

/// Whole-ensemble accuracy on `data`, with `size_of` overriding node sizes.
pub fn ensemble_accuracy<M: ScoreModel>(
    tree: &EnsembleTree<M>,
    data: &LabeledDataset,
    size_of: impl Fn(NodeId) -> Option<(usize, usize)>,
) -> Result<Ratio> {
    let mut ratio = Ratio::default();
    for s in data.samples() {
        let trace = tree.route_with_sizes(&s.image, |n| size_of(n.id))?;
        ratio.record(trace.predicted == data.label_name(s));
    }
    Ok(ratio)
}

/// Scores each second-stage node (and the root when `include_root`) at every
/// candidate size on its node-local validation subset and pins the arg-max
/// size on the tree.
pub fn size_sweep<M: ScoreModel>(
    tree: &mut EnsembleTree<M>,
    validation: &LabeledDataset,
    candidates: &[(usize, usize)],
    include_root: bool,
) -> Result<SweepReport> {
    if candidates.is_empty() {
        return Err(Error::Config("candidate_sizes must not be empty".into()));
    }
    if let Some(bad) = candidates.iter().find(|(h, w)| *h == 0 || *w == 0) {
        return Err(Error::Config(format!("candidate size {bad:?} has a zero extent")));
    }
    let swept: Vec<NodeId> = tree
        .spec()
        .nodes()
        .iter()
        .filter(|n| if include_root { n.depth <= 1 } else { n.depth == 1 })
        .map(|n| n.id)
        .collect();

    let mut rows = Vec::with_capacity(swept.len());
    for &id in &swept {
        let node = tree.spec().node(id).expect("swept id comes from the tree");
        let mut accuracies = Vec::with_capacity(candidates.len());
        for &size in candidates {
            let acc = node_local_accuracy(tree, node, validation, Some(size))?;
            if acc.total == 0 {
                return Err(Error::Data(format!(
                    "node {id} has no validation samples of its classes"
                )));
            }
            accuracies.push(acc);
        }
        let scored: Vec<((usize, usize), f64)> = candidates
            .iter()
            .copied()
            .zip(accuracies.iter().map(|a| a.value()))
            .collect();
        let (h, w) = select_node_input_size(&scored)?;
        rows.push(SweepRow {
            node: id,
            groups: node.partition.groups().to_vec(),
            accuracies,
            committed: [h, w],
        });
    }

    let mut uniform = Vec::with_capacity(candidates.len());
    for &size in candidates {
        uniform.push(ensemble_accuracy(tree, validation, |_| Some(size))?);
    }
    for row in &rows {
        tree.set_input_size(row.node, Some((row.committed[0], row.committed[1])))?;
    }
    let specific = ensemble_accuracy(tree, validation, |_| None)?;
    Ok(SweepReport {
        candidates: candidates.iter().map(|&(h, w)| [h, w]).collect(),
        rows,
        uniform,
        specific,
    })
}

/// One row of the size comparison table: baseline accuracy (absent for
/// per-node sizing) and ensemble accuracy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeTableRow {
    pub label: String,
    pub baseline: Option<Ratio>,
    pub ensemble: Ratio,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeTable {
    pub baseline_name: String,
    pub ensemble_name: String,
    pub rows: Vec<SizeTableRow>,
}

impl SizeTable {
    /// Rows for each uniform size followed by the per-node row.
    pub fn new(
        baseline_name: &str,
        ensemble_name: &str,
        candidates: &[(usize, usize)],
        baseline: &[Ratio],
        uniform: &[Ratio],
        specific: Ratio,
    ) -> Self {
        let sizes: Vec<String> = candidates.iter().map(|(h, w)| format!("({h},{w})")).collect();
        let mut rows: Vec<SizeTableRow> = sizes
            .iter()
            .zip(baseline.iter().zip(uniform))
            .map(|(label, (&b, &e))| SizeTableRow {
                label: label.clone(),
                baseline: Some(b),
                ensemble: e,
            })
            .collect();
        rows.push(SizeTableRow {
            label: format!("CNN-Specific: {} per CNN", sizes.join(" or ")),
            baseline: None,
            ensemble: specific,
        });
        Self {
            baseline_name: baseline_name.to_string(),
            ensemble_name: ensemble_name.to_string(),
            rows,
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "Test Image Size\t{}\t{}\n",
            self.baseline_name, self.ensemble_name
        );
        for row in &self.rows {
            let base = row
                .baseline
                .map(|b| b.to_string())
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!("{}\t{}\t{}\n", row.label, base, row.ensemble));
        }
        out
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("size table serializes");
        s.push('\n');
        s
    }
}

/// Renders a signed difference of two accuracies at table precision.
pub fn format_delta(from: Ratio, to: Ratio) -> String {
    format_units(to.basis_points() - from.basis_points(), true)
}
