use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn marlbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marlbench"))
        .args(args)
        .env_remove("MARLBENCH_RESULTS_DIR")
        .output()
        .expect("binary runs")
}

fn train_climbing(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--algorithm", "iql", "--task", "climbing", "--steps", "2000", "--eval-episodes", "5",
        "--results-dir", dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    marlbench(&args)
}

#[test]
fn train_writes_one_row_per_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_climbing(dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("climbing__iql__sharing.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 100);
    assert!(csv.lines().next().unwrap().contains("mean_return"));
    let summary = fs::read_to_string(dir.path().join("climbing__iql__sharing__summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(train_climbing(d.path(), &["--seeds", "2"]).status.success());
    }
    let name = "climbing__iql__sharing.csv";
    assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
}

#[test]
fn bad_input_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let unknown_task = marlbench(&["train", "--algorithm", "iql", "--task", "nope", "--steps", "10", "--results-dir", d]);
    assert_eq!(unknown_task.status.code(), Some(2));
    let unknown_alg = marlbench(&["train", "--algorithm", "dqn", "--task", "climbing", "--steps", "10", "--results-dir", d]);
    assert_eq!(unknown_alg.status.code(), Some(2));
    assert_eq!(marlbench(&["frobnicate"]).status.code(), Some(2));
    let missing = marlbench(&["evaluate", "--algorithm", "iql", "--task", "climbing", "--checkpoint", "/nonexistent/x.ckpt"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn config_file_sets_run_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "algorithm = \"vdn\"\ntask = \"penalty-k0\"\nsteps = 1000\nhidden_dim = 16\n").unwrap();
    let out = marlbench(&[
        "train", "--config", cfg.to_str().unwrap(), "--eval-points", "3", "--eval-episodes", "2",
        "--results-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("penalty-k0__vdn__sharing.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    fs::write(&cfg, "algorithm = \"vdn\"\ntask = \"penalty-k0\"\nhiden_dim = 16\n").unwrap();
    let bad = marlbench(&["train", "--config", cfg.to_str().unwrap(), "--steps", "10"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn checkpoint_can_be_evaluated() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    let out = train_climbing(dir.path(), &["--checkpoint-dir", ckpt.to_str().unwrap()]);
    assert!(out.status.success());
    let file = ckpt.join("climbing__iql__sharing__seed0.ckpt");
    assert!(file.exists());
    let eval = marlbench(&[
        "evaluate", "--algorithm", "iql", "--task", "climbing", "--checkpoint", file.to_str().unwrap(), "--episodes", "3",
    ]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let wrong = marlbench(&[
        "evaluate", "--algorithm", "ia2c", "--task", "climbing", "--checkpoint", file.to_str().unwrap(),
    ]);
    assert_eq!(wrong.status.code(), Some(3));
}

#[test]
fn bench_prints_throughput_table() {
    let out = marlbench(&["bench", "--task", "penalty-k0", "--task", "rware-tiny-2ag-v1", "--steps", "200"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].contains("Number of agents") && lines[0].contains("Time per step [in ms]"));
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("rware-tiny-2ag-v1"));
}

#[test]
fn list_tasks_includes_each_family() {
    let out = marlbench(&["list-tasks"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for t in ["climbing", "Foraging-8x8-2p-2f-coop-v1", "rware-tiny-2ag-v1"] {
        assert!(text.lines().any(|l| l == t), "{t}");
    }
}
