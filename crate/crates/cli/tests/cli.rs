//! The `afbc` binary end to end: exit codes, dataset commands, training
//! determinism, snapshots and evaluation.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use afbc::datasets::{load, Tag, Tier};
use afbc_cli::config::{validate_config, SNAPSHOT_FILE};

const SMALL_RUN: &str = r#"
[dataset]
recipe = "mc-adversarial-expert"
expert_transitions = 300

[train]
mode = "afbc_per"
steps = 120
batch_size = 64
eval_interval = 60
eval_episodes = 1
histogram_probe = 100

[agent]
hidden = [16, 16]
"#;

fn afbc(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afbc"))
        .args(args)
        .env("AFBC_OUT_DIR", out_root)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_and_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(afbc(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(afbc(&["train"], tmp.path()).status.code(), Some(2));
    assert_eq!(afbc(&["frobnicate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[replay]\nalpha = 1.5\n");
    let o = afbc(&["train", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "[agent]\ngama = 0.9\n");
    let o = afbc(&["train", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gama"));

    let missing = tmp.path().join("nope.toml");
    assert_eq!(afbc(&["train", "--config", missing.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("absent.bin");
    let o = afbc(&["evaluate", "--checkpoint", ck.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ignored_fields_warn_but_train() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{SMALL_RUN}\n[agent.filter]\nkind = \"binary\"\nbeta = 2.0\n");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("run");
    let o = afbc(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: agent.filter.beta is ignored"));
}

#[test]
fn great_expert_manifest_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let tiers = tmp.path().join("tiers.bin");
    let o = afbc(
        &["collect", "--env", "pendulum", "--target-per-tier", "16000", "--seed", "3", "--out", tiers.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let ds = tmp.path().join("ge.bin");
    let o = afbc(
        &[
            "build-dataset",
            "--recipe",
            "great-expert",
            "--budget",
            "30000",
            "--tiers",
            tiers.to_str().unwrap(),
            "--out",
            ds.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("total=30000"), "{stdout}");

    let (data, manifest) = load(&ds).unwrap();
    assert_eq!(manifest.total, 30_000);
    assert_eq!(manifest.counts["good"], 15_000);
    assert_eq!(manifest.counts["expert"], 15_000);
    assert_eq!(data.count_tag(Tag::Tier(Tier::Good)), 15_000);
    assert_eq!(data.count_tag(Tag::Tier(Tier::Expert)), 15_000);
}

#[test]
fn builtin_mixture_respects_the_noise_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let o = afbc(&["build-dataset", "--recipe", "mc-adversarial-expert", "--budget", "1000"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (data, manifest) = load(&tmp.path().join("mc-adversarial-expert.bin")).unwrap();
    assert_eq!(data.len(), 1000);
    assert_eq!(manifest.total, 1000);
    assert_eq!(data.count_tag(Tag::Tier(Tier::Expert)), 100);
}

#[test]
fn training_twice_gives_identical_logs_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|n| tmp.path().join(n).join("run")).collect();
    for r in &runs {
        let o = afbc(
            &["train", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", r.to_str().unwrap()],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let files = files_under(&runs[0]);
    assert_eq!(files, files_under(&runs[1]));
    for f in ["log.jsonl", "checkpoint.bin", "report/scores.csv", "report/curves.svg", "report/histograms.csv"] {
        assert!(files.contains(&PathBuf::from(f)), "{f} missing from {files:?}");
    }
    for f in files.iter().filter(|f| f.as_path() != Path::new(SNAPSHOT_FILE)) {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        let b = std::fs::read(runs[1].join(f)).unwrap();
        assert_eq!(a, b, "{}", f.display());
    }
}

#[test]
fn snapshot_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let first = tmp.path().join("first");
    let o = afbc(&["train", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let snap = first.join(SNAPSHOT_FILE);
    let resolved = validate_config(&snap).unwrap();
    assert_eq!(resolved.config.train.steps, 120);
    assert_eq!(resolved.config.agent.hidden, vec![16, 16]);

    let second = tmp.path().join("second");
    let o = afbc(&["train", "--config", snap.to_str().unwrap(), "--out", second.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("log.jsonl")).unwrap(),
        std::fs::read(second.join("log.jsonl")).unwrap()
    );
}

#[test]
fn evaluate_reads_a_trained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let o = afbc(&["train", "--config", cfg.to_str().unwrap(), "--seed", "2"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // default output goes under AFBC_OUT_DIR
    let ck = tmp.path().join("train-seed2").join("checkpoint.bin");
    assert!(ck.exists());

    let o = afbc(&["evaluate", "--checkpoint", ck.to_str().unwrap(), "--episodes", "3", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["returns"].as_array().unwrap().len(), 3);
    assert!(v["mean_return"].is_number());
    let again = afbc(&["evaluate", "--checkpoint", ck.to_str().unwrap(), "--episodes", "3", "--seed", "1"], tmp.path());
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn several_seeds_share_one_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let out = tmp.path().join("multi");
    let o = afbc(
        &["train", "--config", cfg.to_str().unwrap(), "--seed", "1", "--seeds", "2", "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for d in ["seed-1", "seed-2"] {
        assert!(out.join(d).join("log.jsonl").exists());
    }
    assert!(out.join("report").join("scores.csv").exists());

    let o = afbc(&["report", "--run-dir", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_ne!(afbc(&["report", "--run-dir", empty.to_str().unwrap()], tmp.path()).status.code(), Some(0));
}
