use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 3
[synthetic]
n = 300
num_classes = 6
dim = 8
[head]
hidden_dims = [16]
[distill]
max_epochs = 4
[gate]
max_epochs = 4
"#;

fn emokd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emokd"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = setup();
    let base = ["--config", "run.toml", "--out", "out"];
    for verb in ["train-distill", "train-gate", "evaluate", "complementarity"] {
        let out = emokd(dir.path(), &[&base[..], &[verb]].concat());
        assert!(
            out.status.success(),
            "{verb}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = emokd(
        dir.path(),
        &[&base[..], &["ablate", "--which", "gate"]].concat(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["points"].as_array().unwrap().len(), 5);

    let runs: Vec<_> = std::fs::read_dir(dir.path().join("out")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = runs[0].as_ref().unwrap().path();
    assert!(run.join("summary/emotion6_eval.summary.json").exists());
    assert!(run.join("plots/gate_sweep.plot.svg").exists());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = setup();
    let code = |args: &[&str]| emokd(dir.path(), args).status.code();

    assert_eq!(code(&["--config", "missing.toml", "synth"]), Some(2));
    assert_eq!(
        code(&[
            "--config",
            "run.toml",
            "--set",
            "distill.alpha=1.5",
            "synth"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&["--config", "run.toml", "--set", "bogus=1", "synth"]),
        Some(2)
    );
    assert_eq!(
        code(&["--config", "run.toml", "ablate", "--which", "width"]),
        Some(2)
    );
    assert_eq!(
        code(&["--config", "run.toml", "--out", "o", "train-gate"]),
        Some(3)
    );
    assert_eq!(
        code(&[
            "--config",
            "run.toml",
            "--set",
            "synthetic.overlap=0.9",
            "synth"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "--config",
            "run.toml",
            "--out",
            "o",
            "--set",
            "synthetic.n=5",
            "train-distill"
        ]),
        Some(4)
    );
    assert_eq!(
        code(&["--config", "run.toml", "--out", "o", "prepare-instructions"]),
        Some(2)
    );
}

#[test]
fn seed_flag_selects_a_distinct_run() {
    let dir = setup();
    let run_dirs = |seed: &str| {
        let out = emokd(
            dir.path(),
            &[
                "--config", "run.toml", "--out", "o", "--seed", seed, "synth",
            ],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read_dir(dir.path().join("o")).unwrap().count()
    };
    assert_eq!(run_dirs("1"), 1);
    assert_eq!(run_dirs("1"), 1);
    assert_eq!(run_dirs("2"), 2);
}
