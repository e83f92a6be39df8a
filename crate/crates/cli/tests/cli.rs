use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stragglers"))
}

fn write_config(dir: &Path, experiment: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"experiment = "{experiment}"

[dataset]
source = "synthetic"
size = 120
synthetic_dim = 16
test_size = 60
noise_sigmas = [0.0, 1.0]

[model]
hidden = [6]
activation = "tanh"

[optimizer]
kind = "gd"
learning_rate = 0.5

[run]
seeds = 2
max_epochs = 25
output_dir = "{}"
{extra}"#,
        dir.join("out").display()
    );
    let path = dir.join(format!("{experiment}.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

#[test]
fn run_then_summarize() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "trajectory", "");
    let out = run(&["--deterministic", "run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = PathBuf::from(stdout(&out));
    assert!(dir.starts_with(tmp.path().join("out")));
    for f in ["manifest.json", "config.toml", "inversion.csv", "runs/base-seed0/trajectory.csv"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(dir.join("runs/base-seed1/trajectory.csv")).unwrap();
    assert!(csv.starts_with("epoch,eps_tr,eps_test,r_plus,r_minus,d\n"));
    assert_eq!(csv.lines().count(), 27);

    let s = run(&["summarize", tmp.path().join("out").to_str().unwrap()]);
    assert!(s.status.success());
    let text = stdout(&s);
    assert!(text.contains("== trajectory"), "{text}");
    assert!(text.contains("base: 2 runs"), "{text}");
}

#[test]
fn deterministic_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "trajectory", "");
    let a = PathBuf::from(stdout(&run(&["--deterministic", "run", cfg.to_str().unwrap()])));
    let b = PathBuf::from(stdout(&run(&["--threads", "2", "run", cfg.to_str().unwrap()])));
    assert_ne!(a, b);
    for f in ["inversion.csv", "runs/base-seed0/trajectory.csv", "runs/base-seed1/trajectory.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_root_override_changes_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "trajectory", "");
    run(&["run", cfg.to_str().unwrap()]);
    let b = PathBuf::from(stdout(&run(&["--seed-root", "7", "run", cfg.to_str().unwrap()])));
    let stored = fs::read_to_string(b.join("config.toml")).unwrap();
    assert!(stored.contains("seed_root = 7"));
    assert!(b.join("runs/base-seed7/trajectory.csv").exists());
    let s = stdout(&run(&["summarize", tmp.path().join("out").to_str().unwrap()]));
    assert_eq!(s.matches("== trajectory").count(), 2, "{s}");
    assert!(!s.contains("does not match"));
}

#[test]
fn invalid_activation_is_reported_with_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "trajectory", "");
    let text = fs::read_to_string(&cfg).unwrap().replace("\"tanh\"", "\"swish\"");
    fs::write(&cfg, text).unwrap();
    let out = run(&["run", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.activation"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn summarize_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["summarize", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no experiment manifests"));
}

#[test]
fn every_experiment_kind_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("optimizer-sweep", "\n[[sweep.optimizers]]\nkind = \"adam\"\nlearning_rate = 0.01\n", "runs/adam-0-seed0/curve.csv"),
        ("subsample-sweep", "\n[sweep]\nchunks = [0, 1]\n", "runs/chunk1-seed0/trajectory.csv"),
        ("random-labels", "", "random_labels.csv"),
        ("prune-retrain", "\n[sweep]\nerror_grid = [0.3]\n", "prune.csv"),
        ("noisy-test", "", "prune.csv"),
        ("zscore", "\n[sweep]\npairs = 2\nnull_draws = 200\nerror_grid = [0.3, 0.1]\n", "zscore.csv"),
        ("phi-scaling", "\n[sweep]\nsizes = [60, 90, 120]\n", "phi_scaling.csv"),
        ("arch-sweep", "\n[sweep]\narchitectures = [[4], [4, 4]]\n", "runs/h4x4-seed1/trajectory.csv"),
        ("activation-sweep", "\n[sweep]\nactivations = [\"relu\", \"identity\"]\n", "runs/identity-seed0/trajectory.csv"),
    ];
    for (kind, extra, expected) in cases {
        let cfg = write_config(tmp.path(), kind, extra);
        let out = run(&["--deterministic", "run", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        let dir = PathBuf::from(stdout(&out));
        assert!(dir.join(expected).exists(), "{kind}: missing {expected}");
        assert!(dir.join("manifest.json").exists());
    }
    let s = run(&["summarize", tmp.path().join("out").to_str().unwrap()]);
    assert!(s.status.success());
    assert_eq!(stdout(&s).matches("== ").count(), cases.len());
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = stragglers_core::experiment::ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);

    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "--deterministic",
        "run",
        dir.join("smoke.toml").to_str().unwrap(),
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
