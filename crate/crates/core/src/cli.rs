//! Command-line driver: `prepare`, `train`, `evaluate` and `compare` over a
//! TOML run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    apply_manifest, load_directory_dataset, split_dataset, synth_shapes_named, validate_ratios,
    DatasetSplit, LabeledDataset, LoadOptions, SplitManifest, DEFAULT_RATIOS, SHAPE_CLASSES,
};
use crate::ensemble::{
    canonical_four_class, canonical_six_class_s1, canonical_six_class_s2, generic_tree,
    EnsembleTree, NodeId, TreeManifest, TreeSpec,
};
use crate::error::Error;
use crate::eval::{
    compare_report, evaluate_ensemble, evaluate_ensemble_sized, evaluate_flat, size_sweep,
    EvaluationReport, SizeTable,
};
use crate::model::{hex, shared_pretrain, Backbone, BackboneSpec, HeadSpec, NodeClassifier};
use crate::training::{train_ensemble, train_flat_baseline, TrainingConfig, TrainingHistory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Missing(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Missing(_) => EXIT_MISSING,
            CliError::Runtime(Error::Config(_)) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Missing(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cnntree", version, about = "Train and compare CNN-tree ensembles against a flat baseline")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for feature extraction and node training.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load the dataset and write the stratified split manifest.
    Prepare,
    /// Train the flat baseline or the ensemble tree.
    Train {
        #[arg(long, value_enum)]
        target: Target,
    },
    /// Evaluate whichever trained models exist on the test split.
    Evaluate,
    /// Compare baseline and ensemble on the test split.
    Compare {
        /// Also sweep per-node input sizes on the validation split.
        #[arg(long)]
        sweep: bool,
        /// Compare two saved evaluation reports instead of trained models.
        #[arg(long, requires = "ensemble_report")]
        baseline_report: Option<PathBuf>,
        #[arg(long, requires = "baseline_report")]
        ensemble_report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Baseline,
    Ensemble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Rendered shapes; class names must come from the built-in shape list.
    Synthetic {
        per_class: usize,
        #[serde(default = "default_image_size")]
        image_size: [usize; 2],
    },
    /// `path/<class>/<image>` files.
    Directory { path: PathBuf },
}

fn default_image_size() -> [usize; 2] {
    [32, 32]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TreeChoice {
    FourClass,
    SixClassS1,
    SixClassS2,
    Generic { branching: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub classes: Vec<String>,
    pub tree: TreeChoice,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_max_epochs: usize,
    #[serde(default = "default_filters")]
    pub backbone_filters: Vec<usize>,
    #[serde(default = "default_image_size")]
    pub input_size: [usize; 2],
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default = "default_candidates")]
    pub candidate_sizes: Vec<[usize; 2]>,
    #[serde(default = "default_ratios")]
    pub split_ratios: [f64; 3],
    /// Sweep the root's input size as well as the second stage.
    #[serde(default)]
    pub sweep_root: bool,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn default_pretrain_epochs() -> usize {
    30
}
fn default_filters() -> Vec<usize> {
    vec![16, 32, 64]
}
fn default_hidden() -> usize {
    64
}
fn default_candidates() -> Vec<[usize; 2]> {
    vec![[32, 32], [48, 48]]
}
fn default_ratios() -> [f64; 3] {
    DEFAULT_RATIOS
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if raw
            .get("training")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("seed"))
        {
            return Err(CliError::Config(
                "training.seed is derived from the top-level seed; set seed instead".into(),
            ));
        }
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.training.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(seed) = seed {
            self.seed = seed;
            self.training.seed = seed;
        }
        if let Some(out) = out {
            self.output_dir = out;
        }
        self
    }

    pub fn backbone_spec(&self) -> BackboneSpec {
        let [h, w] = self.input_size;
        BackboneSpec::with_filters((h, w, 3), &self.backbone_filters)
    }

    pub fn candidates(&self) -> Vec<(usize, usize)> {
        self.candidate_sizes.iter().map(|&[h, w]| (h, w)).collect()
    }

    pub fn tree_spec(&self) -> crate::Result<TreeSpec> {
        match &self.tree {
            TreeChoice::FourClass => canonical_four_class(&self.classes),
            TreeChoice::SixClassS1 => canonical_six_class_s1(&self.classes),
            TreeChoice::SixClassS2 => canonical_six_class_s2(&self.classes),
            TreeChoice::Generic { branching } => generic_tree(&self.classes, branching),
        }
    }

    /// Checks everything that can be checked without touching the output
    /// directory.
    pub fn validate(&self) -> CliResult<()> {
        let cfg = |e: Error| CliError::Config(e.to_string());
        if self.classes.len() < 2 {
            return Err(CliError::Config("classes must list at least two classes".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.is_empty() || c.contains(['/', '\t', '\n', '+']) {
                return Err(CliError::Config(format!("class name {c:?} is not allowed")));
            }
            if self.classes[..i].contains(c) {
                return Err(CliError::Config(format!("class {c:?} is listed twice")));
            }
        }
        validate_ratios(self.split_ratios).map_err(cfg)?;
        self.training.validate().map_err(cfg)?;
        if self.pretrain_max_epochs == 0 {
            return Err(CliError::Config("pretrain_max_epochs must be at least 1".into()));
        }
        let spec = self.backbone_spec();
        spec.validate().map_err(cfg)?;
        HeadSpec::for_arity(self.hidden_units, self.classes.len()).map_err(cfg)?;
        if self.candidate_sizes.is_empty() {
            return Err(CliError::Config("candidate_sizes must not be empty".into()));
        }
        for &[h, w] in &self.candidate_sizes {
            spec.feature_extent((h, w)).map_err(|e| {
                CliError::Config(format!("candidate_sizes entry [{h}, {w}]: {e}"))
            })?;
        }
        self.tree_spec()
            .map_err(|e| CliError::Config(format!("tree does not fit classes: {e}")))?;
        match &self.dataset {
            DatasetSource::Synthetic {
                per_class,
                image_size,
            } => {
                if *per_class < 3 {
                    return Err(CliError::Config(
                        "dataset.per_class must be at least 3".into(),
                    ));
                }
                if image_size.contains(&0) {
                    return Err(CliError::Config("dataset.image_size must be positive".into()));
                }
                if let Some(c) = self.classes.iter().find(|c| !SHAPE_CLASSES.contains(&c.as_str())) {
                    return Err(CliError::Config(format!(
                        "synthetic class {c:?} is not one of {SHAPE_CLASSES:?}"
                    )));
                }
            }
            DatasetSource::Directory { path } => {
                if !path.is_dir() {
                    return Err(CliError::Config(format!(
                        "dataset.path {} is not a directory",
                        path.display()
                    )));
                }
                for c in &self.classes {
                    if !path.join(c).is_dir() {
                        return Err(CliError::Config(format!(
                            "dataset.path has no directory for class {c:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// File locations under the output directory.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.tsv")
    }
    pub fn backbone(&self) -> PathBuf {
        self.root.join("backbone.ckpt")
    }
    pub fn backbone_meta(&self) -> PathBuf {
        self.root.join("backbone.json")
    }
    pub fn backbone_log(&self) -> PathBuf {
        self.root.join("backbone.log")
    }
    pub fn baseline(&self) -> PathBuf {
        self.root.join("baseline.ckpt")
    }
    pub fn baseline_log(&self) -> PathBuf {
        self.root.join("baseline.log")
    }
    pub fn baseline_meta(&self) -> PathBuf {
        self.root.join("baseline.json")
    }
    pub fn ensemble_dir(&self) -> PathBuf {
        self.root.join("ensemble")
    }
    pub fn tree(&self) -> PathBuf {
        self.ensemble_dir().join("tree.json")
    }
    pub fn ensemble_meta(&self) -> PathBuf {
        self.ensemble_dir().join("meta.json")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

/// Provenance written next to trained artifacts so stale or mismatched
/// combinations are caught.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactMeta {
    split: String,
    backbone: String,
    seed: u64,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn read_bytes(path: &Path, what: &str) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|_| CliError::Missing(format!("no {what} at {}", path.display())))
}

fn read_text(path: &Path, what: &str) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|_| CliError::Missing(format!("no {what} at {}", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn log(msg: impl AsRef<str>) {
    eprintln!("cnntree: {}", msg.as_ref());
}

/// Everything the subcommands share once configuration is validated.
pub struct Run {
    pub config: RunConfig,
    pub layout: Layout,
}

impl Run {
    pub fn new(config: RunConfig) -> CliResult<Self> {
        config.validate()?;
        let layout = Layout::new(&config.output_dir);
        Ok(Self { config, layout })
    }

    pub fn load_dataset(&self) -> CliResult<LabeledDataset> {
        let [h, w] = self.config.input_size;
        match &self.config.dataset {
            DatasetSource::Synthetic {
                per_class,
                image_size,
            } => {
                let names: Vec<&str> = self.config.classes.iter().map(String::as_str).collect();
                let ds = synth_shapes_named(
                    &names,
                    *per_class,
                    (image_size[0], image_size[1]),
                    self.config.seed,
                )?;
                Ok(ds)
            }
            DatasetSource::Directory { path } => {
                let options = LoadOptions {
                    target_size: Some((h, w)),
                    ..LoadOptions::default()
                };
                Ok(load_directory_dataset(path, &self.config.classes, &options)?.dataset)
            }
        }
    }

    pub fn prepare(&self) -> CliResult<()> {
        let ds = self.load_dataset()?;
        let split = split_dataset(&ds, self.config.split_ratios, self.config.seed)?;
        write(&self.layout.split(), split.manifest.render())?;
        log(format!(
            "split {} images into {}/{}/{} train/val/test",
            ds.len(),
            split.train.len(),
            split.validation.len(),
            split.test.len()
        ));
        Ok(())
    }

    fn split_text(&self) -> CliResult<String> {
        read_text(&self.layout.split(), "split manifest (run prepare first)")
            .map_err(|_| CliError::Missing("no split manifest; run prepare first".into()))
    }

    pub fn load_split(&self) -> CliResult<(DatasetSplit, String)> {
        let text = self.split_text()?;
        let manifest = SplitManifest::parse(&text)?;
        let ds = self.load_dataset()?;
        Ok((apply_manifest(&ds, &manifest)?, sha256_hex(text.as_bytes())))
    }

    fn backbone_key(&self, split: &str) -> String {
        let key = serde_json::json!({
            "split": split,
            "spec": self.config.backbone_spec(),
            "training": self.config.training,
            "pretrain_max_epochs": self.config.pretrain_max_epochs,
            "hidden_units": self.config.hidden_units,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    /// The shared backbone, pretrained once per split and configuration.
    fn backbone(&self, split: &DatasetSplit, split_hash: &str) -> CliResult<Backbone> {
        let key = self.backbone_key(split_hash);
        let spec = self.config.backbone_spec();
        if let (Ok(meta), Ok(bytes)) = (
            fs::read_to_string(self.layout.backbone_meta()),
            fs::read(self.layout.backbone()),
        ) {
            if meta.trim() == key {
                let mut backbone = Backbone::new(spec, self.config.seed)?;
                backbone.load_checkpoint(&bytes)?;
                backbone.freeze();
                return Ok(backbone);
            }
        }
        log("pretraining shared backbone");
        let mut cfg = self.config.training.clone();
        cfg.max_epochs = self.config.pretrain_max_epochs;
        let (backbone, history) = shared_pretrain(
            &spec,
            &split.train,
            &split.validation,
            &cfg,
            self.config.hidden_units,
        )?;
        write(&self.layout.backbone(), backbone.to_checkpoint())?;
        write(&self.layout.backbone_log(), history.render_log())?;
        write(&self.layout.backbone_meta(), format!("{key}\n"))?;
        Ok(backbone)
    }

    fn check_backbone(&self, backbone: &Backbone, before: &str) -> CliResult<()> {
        if backbone.checksum() != before {
            return Err(CliError::Runtime(Error::State(
                "backbone parameters changed during head training".into(),
            )));
        }
        Ok(())
    }

    pub fn train(&self, target: Target) -> CliResult<()> {
        let (split, split_hash) = self.load_split()?;
        let backbone = self.backbone(&split, &split_hash)?;
        let checksum = backbone.checksum();
        let meta = ArtifactMeta {
            split: split_hash,
            backbone: checksum.clone(),
            seed: self.config.seed,
        };
        match target {
            Target::Baseline => {
                log("training flat baseline");
                let clf = train_flat_baseline(
                    &split,
                    &self.config.training,
                    &backbone,
                    self.config.hidden_units,
                )?;
                self.check_backbone(clf.backbone(), &checksum)?;
                write(&self.layout.baseline(), clf.to_checkpoint())?;
                let history = clf.history().expect("trained classifier has history");
                write(&self.layout.baseline_log(), history.render_log())?;
                write(&self.layout.baseline_meta(), to_json(&meta))?;
            }
            Target::Ensemble => {
                let spec = self.config.tree_spec()?;
                log(format!("training {} node classifiers", spec.node_count()));
                let tree = train_ensemble(
                    &spec,
                    &split,
                    &self.config.training,
                    &backbone,
                    self.config.hidden_units,
                )?;
                let mut checkpoints = BTreeMap::new();
                let dir = self.layout.ensemble_dir();
                for (id, clf) in tree.models().iter().enumerate() {
                    self.check_backbone(clf.backbone(), &checksum)?;
                    let name = format!("node-{id}.ckpt");
                    write(&dir.join(&name), clf.to_checkpoint())?;
                    let history = clf.history().expect("trained classifier has history");
                    write(&dir.join(format!("node-{id}.log")), history.render_log())?;
                    checkpoints.insert(id, name);
                }
                let manifest = TreeManifest::from_spec(tree.spec(), &checkpoints);
                write(&self.layout.tree(), manifest.render())?;
                write(&self.layout.ensemble_meta(), to_json(&meta))?;
            }
        }
        Ok(())
    }

    fn read_meta(&self, path: &Path, what: &str) -> CliResult<ArtifactMeta> {
        let text = read_text(path, what)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(Error::Format {
                what: "artifact metadata",
                detail: e.to_string(),
            }))
    }

    fn check_meta(&self, meta: &ArtifactMeta, split_hash: &str, what: &str) -> CliResult<()> {
        if meta.split != split_hash {
            return Err(CliError::Config(format!(
                "{what} was trained on a different split; retrain it after prepare"
            )));
        }
        Ok(())
    }

    fn restore(&self, backbone: &Backbone, head: HeadSpec, ckpt: &Path, log_path: &Path) -> CliResult<NodeClassifier> {
        let mut clf = NodeClassifier::with_backbone(backbone.clone(), head, 0)?;
        clf.load_checkpoint(&read_bytes(ckpt, "checkpoint")?)?;
        let history = TrainingHistory::parse_log(&read_text(log_path, "training log")?)?;
        clf.set_history(history);
        Ok(clf)
    }

    fn stored_backbone(&self) -> CliResult<Backbone> {
        let mut backbone = Backbone::new(self.config.backbone_spec(), self.config.seed)?;
        backbone.load_checkpoint(&read_bytes(&self.layout.backbone(), "backbone checkpoint")?)?;
        backbone.freeze();
        Ok(backbone)
    }

    pub fn load_baseline(&self, split_hash: &str) -> CliResult<NodeClassifier> {
        let meta = self.read_meta(&self.layout.baseline_meta(), "trained baseline")?;
        self.check_meta(&meta, split_hash, "baseline")?;
        let backbone = self.stored_backbone()?;
        let head = HeadSpec::for_arity(self.config.hidden_units, self.config.classes.len())?;
        self.restore(&backbone, head, &self.layout.baseline(), &self.layout.baseline_log())
    }

    pub fn load_ensemble(&self, split_hash: &str) -> CliResult<EnsembleTree<NodeClassifier>> {
        let meta = self.read_meta(&self.layout.ensemble_meta(), "trained ensemble")?;
        self.check_meta(&meta, split_hash, "ensemble")?;
        let manifest = TreeManifest::parse(&read_text(&self.layout.tree(), "tree manifest")?)?;
        let (spec, checkpoints) = manifest.to_spec()?;
        let backbone = self.stored_backbone()?;
        let dir = self.layout.ensemble_dir();
        let mut models = Vec::new();
        for node in spec.nodes() {
            let name = checkpoints.get(&node.id).ok_or_else(|| {
                CliError::Missing(format!("tree manifest has no checkpoint for node {}", node.id))
            })?;
            let log_name = Path::new(name).with_extension("log");
            models.push(self.restore(
                &backbone,
                node.head_spec(self.config.hidden_units)?,
                &dir.join(name),
                &dir.join(log_name),
            )?);
        }
        Ok(EnsembleTree::new(spec, models)?)
    }

    fn write_report(&self, name: &str, report: &EvaluationReport) -> CliResult<()> {
        let dir = self.layout.reports();
        write(&dir.join(format!("{name}.json")), report.render_json())?;
        write(&dir.join(format!("{name}.txt")), report.render_text())
    }

    fn baseline_report(&self, clf: &NodeClassifier, test: &LabeledDataset) -> CliResult<EvaluationReport> {
        let name = format!("{}-class CNN", self.config.classes.len());
        Ok(evaluate_flat(&name, clf, &self.config.classes, test, None)?)
    }

    fn ensemble_report(
        &self,
        tree: &EnsembleTree<NodeClassifier>,
        test: &LabeledDataset,
    ) -> CliResult<EvaluationReport> {
        Ok(evaluate_ensemble("CNN-tree ensemble", tree, test)?)
    }

    pub fn evaluate(&self) -> CliResult<()> {
        let (split, split_hash) = self.load_split()?;
        let mut any = false;
        if self.layout.baseline_meta().exists() {
            let clf = self.load_baseline(&split_hash)?;
            self.write_report("baseline", &self.baseline_report(&clf, &split.test)?)?;
            any = true;
        }
        if self.layout.ensemble_meta().exists() {
            let tree = self.load_ensemble(&split_hash)?;
            self.write_report("ensemble", &self.ensemble_report(&tree, &split.test)?)?;
            any = true;
        }
        if !any {
            return Err(CliError::Missing(
                "no trained baseline or ensemble; run train first".into(),
            ));
        }
        Ok(())
    }

    fn dataset_label(&self) -> String {
        match &self.config.dataset {
            DatasetSource::Synthetic { .. } => "synthetic shapes".into(),
            DatasetSource::Directory { path } => path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "images".into()),
        }
    }

    pub fn compare(&self, sweep: bool) -> CliResult<()> {
        let (split, split_hash) = self.load_split()?;
        let baseline = self.load_baseline(&split_hash)?;
        let mut tree = self.load_ensemble(&split_hash)?;
        let base_report = self.baseline_report(&baseline, &split.test)?;
        let ens_report = self.ensemble_report(&tree, &split.test)?;
        self.write_report("baseline", &base_report)?;
        self.write_report("ensemble", &ens_report)?;
        let comparison = compare_report(&self.dataset_label(), &base_report, &ens_report)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let dir = self.layout.reports();
        write(&dir.join("comparison.json"), comparison.render_json())?;
        write(&dir.join("comparison.txt"), comparison.render_text())?;
        print!("{}", comparison.render_text());
        if sweep {
            let candidates = self.config.candidates();
            let report = size_sweep(&mut tree, &split.validation, &candidates, self.config.sweep_root)?;
            write(&dir.join("sweep.json"), report.render_json())?;
            write(&dir.join("sweep.txt"), report.render_text())?;
            let mut baseline_rows = Vec::new();
            let mut uniform_rows = Vec::new();
            for &size in &candidates {
                baseline_rows.push(
                    evaluate_flat("", &baseline, &self.config.classes, &split.test, Some(size))?
                        .accuracy,
                );
                uniform_rows
                    .push(evaluate_ensemble_sized("", &tree, &split.test, Some(size))?.accuracy);
            }
            let specific = self.ensemble_report(&tree, &split.test)?;
            self.write_report("ensemble-sized", &specific)?;
            let table = SizeTable::new(
                &base_report.model,
                &ens_report.model,
                &candidates,
                &baseline_rows,
                &uniform_rows,
                specific.accuracy,
            );
            write(&dir.join("size-table.json"), table.render_json())?;
            write(&dir.join("size-table.txt"), table.render_text())?;
            let checkpoints: BTreeMap<NodeId, String> = tree
                .spec()
                .nodes()
                .iter()
                .map(|n| (n.id, format!("node-{}.ckpt", n.id)))
                .collect();
            write(
                &self.layout.ensemble_dir().join("tree-sized.json"),
                TreeManifest::from_spec(tree.spec(), &checkpoints).render(),
            )?;
            print!("\n{}", table.render_text());
        }
        Ok(())
    }
}

/// Compares two saved evaluation reports, refusing reports from different
/// test sets.
pub fn compare_saved(baseline: &Path, ensemble: &Path, out: Option<&Path>) -> CliResult<()> {
    let load = |p: &Path| -> CliResult<EvaluationReport> {
        Ok(EvaluationReport::parse_json(&read_text(p, "evaluation report")?)?)
    };
    let (b, e) = (load(baseline)?, load(ensemble)?);
    let comparison = compare_report("saved reports", &b, &e)
        .map_err(|err| CliError::Config(err.to_string()))?;
    if let Some(out) = out {
        write(&out.join("comparison.json"), comparison.render_json())?;
        write(&out.join("comparison.txt"), comparison.render_text())?;
    }
    print!("{}", comparison.render_text());
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Command::Compare {
        baseline_report: Some(b),
        ensemble_report: Some(e),
        ..
    } = &cli.command
    {
        return compare_saved(b, e, cli.out.as_deref());
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let config = RunConfig::load(path)?.with_overrides(cli.seed, cli.out.clone());
    let run = Run::new(config)?;
    let go = || match cli.command {
        Command::Prepare => run.prepare(),
        Command::Train { target } => run.train(target),
        Command::Evaluate => run.evaluate(),
        Command::Compare { sweep, .. } => run.compare(sweep),
    };
    match cli.jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("cnntree: {e}");
            e.exit_code()
        }
    }
}
