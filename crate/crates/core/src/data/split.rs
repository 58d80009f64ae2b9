//! Stratified train/validation/test splitting and the split manifest file.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{LabeledDataset, Sample};
use crate::error::{Error, Result};

/// Default proportions, roughly 1531/788/745 of 3064.
pub const DEFAULT_RATIOS: [f64; 3] = [0.50, 0.26, 0.24];

const MANIFEST_MAGIC: &str = "# cnntree split manifest v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Subset::Train),
            "val" => Some(Subset::Val),
            "test" => Some(Subset::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub class: String,
    pub subset: Subset,
}

/// Per-sample subset assignment plus the seed and ratios that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub entries: Vec<ManifestEntry>,
}

impl SplitManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MANIFEST_MAGIC}").unwrap();
        writeln!(out, "# seed={}", self.seed).unwrap();
        let [a, b, c] = self.ratios;
        writeln!(out, "# ratios={a},{b},{c}").unwrap();
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.id, e.class, e.subset.as_str()).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("split manifest", detail);
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            return Err(bad("missing header line".into()));
        }
        let seed = lines
            .next()
            .and_then(|l| l.strip_prefix("# seed="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing or invalid seed line".into()))?;
        let ratios: Vec<f64> = lines
            .next()
            .and_then(|l| l.strip_prefix("# ratios="))
            .map(|v| v.split(',').map(str::parse).collect::<std::result::Result<_, _>>())
            .and_then(|r| r.ok())
            .ok_or_else(|| bad("missing or invalid ratios line".into()))?;
        let ratios: [f64; 3] = ratios
            .try_into()
            .map_err(|_| bad("expected three ratios".into()))?;
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, class, subset] = fields[..] else {
                return Err(bad(format!("line {}: expected 3 tab-separated fields", n + 4)));
            };
            let subset = Subset::parse(subset)
                .ok_or_else(|| bad(format!("line {}: unknown subset {subset:?}", n + 4)))?;
            entries.push(ManifestEntry {
                id: id.to_string(),
                class: class.to_string(),
                subset,
            });
        }
        Ok(Self {
            seed,
            ratios,
            entries,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
    pub manifest: SplitManifest,
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
        return Err(Error::Config(format!(
            "split_ratios must all be positive, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split_ratios must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Per-class subset sizes for `n` samples. Each subset gets at least one.
pub fn stratum_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((n as f64 * ratios[0]).round() as usize).clamp(1, n - 2);
    let val = ((n as f64 * ratios[1]).round() as usize).clamp(1, n - train - 1);
    [train, val, n - train - val]
}

/// Stratified split: each class is shuffled with a seeded generator and cut
/// according to `ratios`. Subsets keep the dataset's sample order.
pub fn split_dataset(dataset: &LabeledDataset, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    validate_ratios(ratios)?;
    let counts = dataset.class_counts();
    if let Some((class, &n)) = counts.iter().enumerate().find(|(_, &n)| n < 3) {
        return Err(Error::Data(format!(
            "class {:?} has {n} samples, at least 3 are needed to split",
            dataset.classes()[class]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Subset::Train; dataset.len()];
    for class in 0..dataset.classes().len() {
        let mut members: Vec<usize> = dataset
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        let [train, val, _] = stratum_sizes(members.len(), ratios);
        for (rank, &i) in members.iter().enumerate() {
            assignment[i] = if rank < train {
                Subset::Train
            } else if rank < train + val {
                Subset::Val
            } else {
                Subset::Test
            };
        }
    }
    let manifest = SplitManifest {
        seed,
        ratios,
        entries: dataset
            .samples()
            .iter()
            .zip(&assignment)
            .map(|(s, &subset)| ManifestEntry {
                id: s.id.clone(),
                class: dataset.label_name(s).to_string(),
                subset,
            })
            .collect(),
    };
    assemble(dataset, &assignment, manifest)
}

/// Rebuilds a split from a previously written manifest.
pub fn apply_manifest(dataset: &LabeledDataset, manifest: &SplitManifest) -> Result<DatasetSplit> {
    let by_id: HashMap<&str, &ManifestEntry> =
        manifest.entries.iter().map(|e| (e.id.as_str(), e)).collect();
    if by_id.len() != manifest.entries.len() {
        return Err(Error::format("split manifest", "duplicate sample ids"));
    }
    if manifest.entries.len() != dataset.len() {
        return Err(Error::Data(format!(
            "manifest lists {} samples, dataset has {}",
            manifest.entries.len(),
            dataset.len()
        )));
    }
    let mut assignment = Vec::with_capacity(dataset.len());
    for s in dataset.samples() {
        let entry = by_id
            .get(s.id.as_str())
            .ok_or_else(|| Error::Data(format!("sample {} is not in the manifest", s.id)))?;
        if entry.class != dataset.label_name(s) {
            return Err(Error::Data(format!(
                "sample {} is class {:?} but the manifest says {:?}",
                s.id,
                dataset.label_name(s),
                entry.class
            )));
        }
        assignment.push(entry.subset);
    }
    assemble(dataset, &assignment, manifest.clone())
}

fn assemble(
    dataset: &LabeledDataset,
    assignment: &[Subset],
    manifest: SplitManifest,
) -> Result<DatasetSplit> {
    let pick = |subset: Subset| -> Result<LabeledDataset> {
        let samples: Vec<Sample> = dataset
            .samples()
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == subset)
            .map(|(s, _)| s.clone())
            .collect();
        LabeledDataset::new(dataset.classes().to_vec(), samples)
    };
    Ok(DatasetSplit {
        train: pick(Subset::Train)?,
        validation: pick(Subset::Val)?,
        test: pick(Subset::Test)?,
        manifest,
    })
}
