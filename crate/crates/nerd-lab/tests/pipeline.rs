//! End-to-end pipeline checks: the real binary drives every stage, outputs
//! are discoverable, reruns are byte-identical, and exit codes follow the
//! documented contract.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nerd-lab"))
}

const MICRO_TOML: &str = r#"
seed = 90

[dataset]
subjects = 3
v = 4
trials = 4

[train]
hidden = 4
steps = 4
batch_episodes = 2
checkpoint_stride = 1

[train.nerd]
epochs = 2

[train.control]
epochs = 2

[fit]
samples = 4

[analysis]
episodes = 4
trialpair_trials = 3
voxel_k = 2
subject_k = 2
kmeans_restarts = 4
"#;

struct Workspace {
    _dir: tempfile::TempDir,
    config: std::path::PathBuf,
    out: std::path::PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("micro.toml");
    std::fs::write(&config, MICRO_TOML).unwrap();
    let out = dir.path().join("out");
    Workspace { _dir: dir, config, out }
}

fn run_cmd(ws: &Workspace, args: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(&ws.config)
        .arg("--out")
        .arg(&ws.out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn walk(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    fn inner(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                inner(root, &path, files);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    inner(root, root, &mut files);
    files
}

#[test]
fn binary_runs_the_full_pipeline() {
    let ws = workspace();

    let gen = run_cmd(&ws, &["gen-data"]);
    assert_ok(&gen, "gen-data");
    assert!(String::from_utf8_lossy(&gen.stdout).contains("wrote 3 subjects"));

    let train = run_cmd(&ws, &["train"]);
    assert_ok(&train, "train");
    let train_out = String::from_utf8_lossy(&train.stdout);
    assert_eq!(train_out.matches("trained 2 epochs").count(), 6);

    let fit = run_cmd(&ws, &["fit"]);
    assert_ok(&fit, "fit");
    let fit_out = String::from_utf8_lossy(&fit.stdout);
    assert_eq!(fit_out.matches("best epoch").count(), 6);
    assert!(fit_out.contains("paired best-NLL test over 3 subjects"));

    let analyze = run_cmd(&ws, &["analyze"]);
    assert_ok(&analyze, "analyze");
    assert!(String::from_utf8_lossy(&analyze.stdout).contains("summary:"));

    let report = run_cmd(&ws, &["report"]);
    assert_ok(&report, "report");

    for rel in [
        "dataset.txt",
        "config.toml",
        "fit/estar.csv",
        "fit/paired_test.csv",
        "analysis/summary.md",
        "analysis/regression_summary.csv",
        "report_index.md",
    ] {
        assert!(ws.out.join(rel).exists(), "{rel} missing");
    }
    let index = std::fs::read_to_string(ws.out.join("report_index.md")).unwrap();
    assert!(index.contains("dataset.txt"));
    assert!(index.contains("analysis/summary.md"));

    // a second train is an idempotent no-op
    let again = run_cmd(&ws, &["train"]);
    assert_ok(&again, "train rerun");
    assert_eq!(String::from_utf8_lossy(&again.stdout).matches("already complete").count(), 6);
}

#[test]
fn independent_runs_are_byte_identical() {
    // drive the pipeline twice through the library in two directories and
    // compare every produced byte
    use nerd_lab::commands::{analyze, fit, gen_data, report, train};
    use nerd_lab::config::RunConfig;

    let cfg: RunConfig = toml::from_str(MICRO_TOML).unwrap();
    let run_all = |dir: &Path| {
        gen_data::run(&cfg, dir).unwrap();
        train::run(&cfg, dir, &train::TrainOptions::default()).unwrap();
        fit::run(&cfg, dir, &fit::FitOptions::default()).unwrap();
        analyze::run(&cfg, dir).unwrap();
        report::run(dir).unwrap();
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());

    let files_a = walk(a.path());
    let files_b = walk(b.path());
    let names_a: Vec<&String> = files_a.keys().collect();
    let names_b: Vec<&String> = files_b.keys().collect();
    assert_eq!(names_a, names_b);
    assert!(files_a.len() > 40, "expected a full report tree, found {}", files_a.len());
    for (name, bytes) in &files_a {
        assert_eq!(bytes, &files_b[name], "{name} differs between identical runs");
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    // user error: fitting before anything exists
    let ws = workspace();
    let fit = run_cmd(&ws, &["fit"]);
    assert_eq!(fit.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fit.stderr).contains("run gen-data first"));

    // user error: analyzing before fitting
    assert_ok(&run_cmd(&ws, &["gen-data"]), "gen-data");
    assert_ok(&run_cmd(&ws, &["train"]), "train");
    let analyze = run_cmd(&ws, &["analyze"]);
    assert_eq!(analyze.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&analyze.stderr).contains("run fit first"));

    // user error: malformed flag value
    let bad_family = run_cmd(&ws, &["train", "--family", "fancy"]);
    assert_eq!(bad_family.status.code(), Some(1));

    // partial analysis: a fitted checkpoint vanishes before analyze
    assert_ok(&run_cmd(&ws, &["fit"]), "fit");
    let models = ws.out.join("models");
    let first_subject = std::fs::read_dir(&models).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_dir_all(first_subject.join("nerd")).unwrap();
    let partial = run_cmd(&ws, &["analyze"]);
    assert_eq!(partial.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&partial.stderr).contains("analysis skipped"));
    // the rest of the report was still written
    assert!(ws.out.join("analysis/summary.md").exists());
}

#[test]
fn config_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "sede = 7\n").unwrap();
    let out = bin().arg("--config").arg(&config).arg("gen-data").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn out_dir_env_fallback_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("micro.toml");
    std::fs::write(&config, MICRO_TOML).unwrap();
    let env_out = dir.path().join("from-env");
    let out = bin()
        .arg("--config")
        .arg(&config)
        .arg("gen-data")
        .env("NERD_LAB_OUT", &env_out)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_out.join("dataset.txt").exists());

    // an explicit --out flag beats the variable
    let flag_out = dir.path().join("from-flag");
    let out2 = bin()
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&flag_out)
        .arg("gen-data")
        .env("NERD_LAB_OUT", dir.path().join("ignored"))
        .output()
        .unwrap();
    assert!(out2.status.success());
    assert!(flag_out.join("dataset.txt").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn seed_flag_changes_the_cohort() {
    let ws = workspace();
    assert_ok(&run_cmd(&ws, &["gen-data"]), "gen-data");
    let baseline = std::fs::read(ws.out.join("dataset.txt")).unwrap();

    let ws2 = workspace();
    assert_ok(
        &bin()
            .arg("--config")
            .arg(&ws2.config)
            .arg("--out")
            .arg(&ws2.out)
            .arg("--seed")
            .arg("91")
            .arg("gen-data")
            .output()
            .unwrap(),
        "gen-data with seed flag",
    );
    let reseeded = std::fs::read(ws2.out.join("dataset.txt")).unwrap();
    assert_ne!(baseline, reseeded);

    let ws3 = workspace();
    assert_ok(&run_cmd(&ws3, &["gen-data"]), "gen-data repeat");
    assert_eq!(baseline, std::fs::read(ws3.out.join("dataset.txt")).unwrap());
}
