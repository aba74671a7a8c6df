use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use shapeedit_cli::pipeline::{save_checkpoint, AccuracyTable, Layout, Manifest, Stamp};
use shapeedit_cli::RunConfig;
use shapeedit_core::jointspace::{JointConfig, JointModel};

const TINY: &str = r#"
seed = 3
seeds = [1]
variants = ["multiutterance", "baseline"]

[dataset]
contexts = 700

[autoencoder]
epochs = 2
max_error = 1.0

[joint]
joint_dim = 8
experts = 3
expert_hidden = 16
embed_dim = 16
layers = 1
ff_dim = 32
epochs = 1

[edit]
steps = 5

[benchmark]
edits = 6
rounds = 2
"#;

fn shapeedit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapeedit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

/// A tiny full run shared by the tests that inspect its outputs.
fn tiny_run() -> &'static (tempfile::TempDir, PathBuf) {
    static RUN: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let out = dir.path().join("out");
        let res = shapeedit(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "run",
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        (dir, out)
    })
}

fn tiny_stamp() -> Stamp {
    Stamp::of(&RunConfig::from_toml(TINY).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&shapeedit(&[])), 1);
    assert_eq!(code(&shapeedit(&["generate", "--bogus"])), 1);
    assert_eq!(code(&shapeedit(&["frobnicate"])), 1);
    assert_eq!(code(&shapeedit(&["--help"])), 0);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[joint]\nheads = 3\n").unwrap();
    let out = dir.path().join("out");
    let res = shapeedit(&[
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "generate",
    ]);
    assert_eq!(code(&res), 2);
    std::fs::write(&bad, "surprise = true\n").unwrap();
    assert_eq!(
        code(&shapeedit(&[
            "--config",
            bad.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "generate"
        ])),
        2
    );
}

#[test]
fn runtime_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = shapeedit(&["--out", out.to_str().unwrap(), "pretrain"]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert_eq!(
            code(&shapeedit(&[
                "--config",
                cfg,
                "--seed",
                seed,
                "--out",
                out.to_str().unwrap(),
                "generate"
            ])),
            0
        );
        std::fs::read(out.join("dataset.jsonl")).unwrap()
    };
    let a = run("a", "3");
    assert_eq!(a, run("b", "3"));
    assert_ne!(a, run("c", "4"));
    let header: serde_json::Value =
        serde_json::from_slice(a.split(|&c| c == b'\n').next().unwrap()).unwrap();
    assert_eq!(header["stamp"]["seed"], 3);
    assert_eq!(header["stamp"]["config_hash"], tiny_stamp().config_hash);
}

#[test]
fn unknown_variant_is_a_validation_error() {
    let (_, out) = tiny_run();
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let res = shapeedit(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "train",
        "--variant",
        "nonsense",
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn full_run_writes_stamped_outputs() {
    let (_, out) = tiny_run();
    let stamp = tiny_stamp();
    let layout = Layout::new(out);
    for json in [
        layout.accuracy(),
        layout.benchmark(),
        layout.report(),
        layout.manifest(),
    ] {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
        assert_eq!(
            v["stamp"]["config_hash"],
            stamp.config_hash,
            "{}",
            json.display()
        );
        assert_eq!(v["stamp"]["seed"], 3);
    }
    for lines in [
        layout.dataset(),
        layout.embeddings(),
        layout.pep_report(shapeedit_cli::Variant::Baseline, 1),
    ] {
        let text = std::fs::read_to_string(&lines).unwrap();
        let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(
            header["stamp"]["config_hash"],
            stamp.config_hash,
            "{}",
            lines.display()
        );
    }
    let ck = shapeedit_core::checkpoint::Checkpoint::load(&layout.autoencoder()).unwrap();
    assert_eq!(ck.header.meta["stamp"]["config_hash"], stamp.config_hash);

    let manifest: Manifest =
        serde_json::from_slice(&std::fs::read(layout.manifest()).unwrap()).unwrap();
    assert!(manifest
        .files
        .contains_key("joint/multiutterance-seed1.ckpt"));
    assert!(manifest.files.contains_key("joint/baseline-seed1.ckpt"));

    let table: AccuracyTable =
        serde_json::from_slice(&std::fs::read(layout.accuracy()).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 2);
    for row in &table.rows {
        assert_eq!(row.key.seed, 1);
        assert_eq!(row.key.checkpoint.len(), 64);
    }
    let bench: serde_json::Value =
        serde_json::from_slice(&std::fs::read(layout.benchmark()).unwrap()).unwrap();
    assert_eq!(bench["iterative"].as_array().unwrap().len(), 4);
    assert_eq!(bench["ablations"].as_array().unwrap().len(), 3);
    assert_eq!(bench["edits"][0]["mining"], "multiutterance");
    assert!(bench["edits"][0]["lambda"].is_number());
}

#[test]
fn edit_command_writes_a_trace_and_score() {
    let (dir, out) = tiny_run();
    let cfg = dir.path().join("tiny.toml");
    let ck = out.join("joint/multiutterance-seed1.ckpt");
    let res = shapeedit(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "edit",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--case",
        "0",
        "--steps",
        "4",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let trace = std::fs::read_to_string(out.join("edit/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 5);
    let pep = std::fs::read_to_string(out.join("edit/pep.jsonl")).unwrap();
    assert!(pep.lines().next().unwrap().contains("header"));

    let missing = shapeedit(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "edit",
        "--checkpoint",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn eval_of_fresh_checkpoints_is_at_chance() {
    let (dir, out) = tiny_run();
    let cfg_path = dir.path().join("tiny.toml");
    let cfg = RunConfig::from_toml(TINY).unwrap();
    let stamp = Stamp::of(&cfg).unwrap();
    let latent = cfg.autoencoder.latent_dim;
    let fresh = tempfile::tempdir().unwrap();
    let eval_out = fresh.path().join("out");
    std::fs::create_dir_all(&eval_out).unwrap();
    for f in ["dataset.jsonl", "autoencoder.ckpt"] {
        std::fs::copy(out.join(f), eval_out.join(f)).unwrap();
    }
    let mut args: Vec<String> = vec![
        "--config".into(),
        cfg_path.to_str().unwrap().into(),
        "--out".into(),
        eval_out.to_str().unwrap().into(),
        "eval".into(),
    ];
    for seed in 0..10 {
        let model = JointModel::new(JointConfig::default(), latent, seed).unwrap();
        let path = fresh.path().join(format!("fresh{seed}.ckpt"));
        save_checkpoint(model.to_checkpoint(), &stamp, &path).unwrap();
        args.push("--checkpoint".into());
        args.push(path.to_str().unwrap().into());
    }
    let res = shapeedit(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let table: AccuracyTable =
        serde_json::from_slice(&std::fs::read(eval_out.join("accuracy.json")).unwrap()).unwrap();
    let mean = table
        .rows
        .iter()
        .map(|r| (r.val_accuracy + r.test_accuracy) / 2.0)
        .sum::<f64>()
        / table.rows.len() as f64;
    assert!(
        (mean - 0.5).abs() <= 0.03,
        "mean accuracy of fresh checkpoints {mean}"
    );
}
