mod common;

use std::fs;
use std::path::Path;

use cnntree::cli::{Run, RunConfig};
use cnntree::data::{SplitManifest, Subset};
use cnntree::ensemble::TreeManifest;
use common::{cnntree, small_config};

const FOUR: [&str; 4] = ["disk", "square", "triangle", "cross"];
const SIX: [&str; 6] = ["disk", "square", "triangle", "cross", "ring", "stripes"];

fn cfg(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn count_files(dir: &Path, suffix: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(suffix))
        .count()
}

#[test]
fn train_without_prepare_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &FOUR, "four-class", "");
    let r = cnntree(&["--config", cfg(&config), "train", "--target", "ensemble"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("no split manifest"), "{}", r.stderr);
    let r = cnntree(&["--config", cfg(&config), "compare"]);
    assert_eq!(r.code, 3);
}

#[test]
fn bad_ratios_are_a_config_error_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &FOUR, "four-class", "split_ratios = [0.5, 0.3, 0.3]");
    let r = cnntree(&["--config", cfg(&config), "prepare"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("split_ratios"), "{}", r.stderr);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        small_config(dir.path(), &FOUR, "four-class", "learning_rat = 0.1"),
        small_config(dir.path(), &SIX, "four-class", ""),
        small_config(dir.path(), &["disk", "square", "triangle", "hexagon"], "four-class", ""),
    ];
    for config in cases {
        let text = fs::read_to_string(&config).unwrap();
        let r = cnntree(&["--config", cfg(&config), "prepare"]);
        assert_eq!(r.code, 2, "{text}\n{}", r.stderr);
        assert!(!dir.path().join("out").exists());
    }
    let config = small_config(dir.path(), &FOUR, "four-class", "");
    assert_eq!(cnntree(&["--config", cfg(&config), "--jobs", "0", "prepare"]).code, 2);
    assert_eq!(cnntree(&["prepare"]).code, 2);
    assert_eq!(cnntree(&["--config", cfg(&config), "bogus"]).code, 2);

    let seeded = fs::read_to_string(&config).unwrap().replace("[training]\n", "[training]\nseed = 4\n");
    fs::write(&config, seeded).unwrap();
    assert_eq!(cnntree(&["--config", cfg(&config), "prepare"]).code, 2);
}

#[test]
fn directory_source_must_exist() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &FOUR, "four-class", "");
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("kind = \"synthetic\"\nper_class = 24\nimage_size = [12, 12]", "kind = \"directory\"\npath = \"/nonexistent/images\"");
    fs::write(&config, text).unwrap();
    let r = cnntree(&["--config", cfg(&config), "prepare"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &FOUR, "four-class", "");
    assert_eq!(cnntree(&["--config", cfg(&config), "prepare"]).code, 0);
    let split = dir.path().join("out/split.tsv");
    let first = fs::read(&split).unwrap();
    assert_eq!(cnntree(&["--config", cfg(&config), "prepare"]).code, 0);
    assert_eq!(fs::read(&split).unwrap(), first);

    let manifest = SplitManifest::parse(&String::from_utf8(first).unwrap()).unwrap();
    for class in FOUR {
        for subset in [Subset::Train, Subset::Val, Subset::Test] {
            let n = manifest
                .entries
                .iter()
                .filter(|e| e.class == class && e.subset == subset)
                .count();
            assert!(n > 0, "{class} has no {subset:?} images");
        }
    }
}

#[test]
fn four_class_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &FOUR, "four-class", "");
    let out = dir.path().join("out");
    let c = cfg(&config);
    assert_eq!(cnntree(&["--config", c, "prepare"]).code, 0);
    assert_eq!(cnntree(&["--config", c, "evaluate"]).code, 3, "nothing trained yet");
    let r = cnntree(&["--config", c, "train", "--target", "ensemble"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(cnntree(&["--config", c, "compare"]).code, 3, "baseline missing");
    assert_eq!(count_files(&out.join("ensemble"), ".ckpt"), 3);
    let manifest = TreeManifest::parse(&fs::read_to_string(out.join("ensemble/tree.json")).unwrap()).unwrap();
    assert_eq!(manifest.to_spec().unwrap().0.node_count(), 3);

    let r = cnntree(&["--config", c, "train", "--target", "baseline"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(out.join("baseline.ckpt").exists());

    let r = cnntree(&["--config", c, "compare"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert!(lines[0].starts_with("Dataset\t"), "{}", r.stdout);
    assert!(lines[0].ends_with("\tDelta"));
    assert!(lines[1].starts_with("synthetic shapes\t"));
    assert_eq!(lines[1].split('\t').count(), 4);
    assert!(out.join("reports/comparison.json").exists());

    assert_eq!(cnntree(&["--config", c, "evaluate"]).code, 0);
    assert!(out.join("reports/baseline.json").exists());
    assert!(out.join("reports/ensemble.json").exists());
}

#[test]
fn six_class_baseline_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &SIX, "six-class-s1", "");
    let c = cfg(&config);
    for args in [
        vec!["prepare"],
        vec!["train", "--target", "baseline"],
        vec!["train", "--target", "ensemble"],
    ] {
        let mut full = vec!["--config", c];
        full.extend(args);
        let r = cnntree(&full);
        assert_eq!(r.code, 0, "{full:?}: {}", r.stderr);
    }
    let out = dir.path().join("out");
    assert_eq!(count_files(&out.join("ensemble"), ".ckpt"), 4);

    let run = Run::new(RunConfig::load(&config).unwrap()).unwrap();
    let (_, hash) = run.load_split().unwrap();
    let baseline = run.load_baseline(&hash).unwrap();
    assert_eq!(baseline.head_spec().output_neurons, 6);

    let r = cnntree(&["--config", c, "compare", "--sweep"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let table = fs::read_to_string(out.join("reports/size-table.txt")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4, "{table}");
    assert!(rows[1].starts_with("(12,12)\t"));
    assert!(rows[2].starts_with("(16,16)\t"));
    assert!(rows[3].starts_with("CNN-Specific: (12,12) or (16,16) per CNN\t-\t"));
    let sweep = cnntree::eval::SweepReport::parse_json(
        &fs::read_to_string(out.join("reports/sweep.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sweep.rows.len(), 3);
    assert!(sweep.commits_match_argmax());
}

#[test]
fn runs_from_different_splits_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &FOUR, "four-class", "");
    let c = cfg(&config);
    for args in [
        vec!["prepare"],
        vec!["train", "--target", "baseline"],
        vec!["train", "--target", "ensemble"],
        vec!["compare"],
    ] {
        let mut full = vec!["--config", c];
        full.extend(args);
        assert_eq!(cnntree(&full).code, 0, "{full:?}");
    }
    let out = dir.path().join("out");
    let first = out.join("reports/baseline.json");
    fs::copy(&first, dir.path().join("baseline-seed3.json")).unwrap();

    // A new split under the old models.
    assert_eq!(cnntree(&["--config", c, "--seed", "99", "prepare"]).code, 0);
    let r = cnntree(&["--config", c, "--seed", "99", "compare"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("different split"), "{}", r.stderr);

    // Saved reports from two different splits.
    let other = dir.path().join("other");
    for args in [
        vec!["prepare"],
        vec!["train", "--target", "ensemble"],
        vec!["evaluate"],
    ] {
        let mut full = vec!["--config", c, "--seed", "99", "--out", other.to_str().unwrap()];
        full.extend(args);
        assert_eq!(cnntree(&full).code, 0, "{full:?}");
    }
    let saved = dir.path().join("baseline-seed3.json");
    let r = cnntree(&[
        "compare",
        "--baseline-report",
        saved.to_str().unwrap(),
        "--ensemble-report",
        other.join("reports/ensemble.json").to_str().unwrap(),
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("different"), "{}", r.stderr);

    let r = cnntree(&[
        "compare",
        "--baseline-report",
        saved.to_str().unwrap(),
        "--ensemble-report",
        out.join("reports/ensemble.json").to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = cnntree(&[
        "compare",
        "--baseline-report",
        dir.path().join("missing.json").to_str().unwrap(),
        "--ensemble-report",
        saved.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 3);
}
