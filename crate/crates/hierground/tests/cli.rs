use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierground")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gen_data_succeeds_and_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["gen-data", "--out", out, "--set", "train_scene_count=5,eval_scene_count=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("train.chains.jsonl").exists());
    assert!(dir.path().join("stats.json").exists());
}

#[test]
fn train_then_eval_then_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let set = "train_scene_count=8,eval_scene_count=4,iterations=2";
    let o = run(&["train", "--out", out, "--set", set, "--mode", "cl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ck = dir.path().join("checkpoint.json");
    let ck = ck.to_str().unwrap();
    let o = run(&["eval", "--out", out, "--set", set, "--mode", "cl", "--checkpoint", ck]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("tier 3 ap"));
    let o = run(&["export-embeddings", "--out", out, "--set", set, "--mode", "cl", "--checkpoint", ck, "woman"]);
    assert_eq!(code(&o), 1, "export has no --mode flag");
    let o = run(&["export-embeddings", "--out", out, "--set", &format!("{set},mode=cl"), "--checkpoint", ck, "woman"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("embeddings.csv").exists());
}

#[test]
fn a_mismatched_checkpoint_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let set = "train_scene_count=8,eval_scene_count=4,iterations=1";
    assert_eq!(code(&run(&["train", "--out", out, "--set", set])), 0);
    let ck = dir.path().join("checkpoint.json");
    let o = run(&["eval", "--out", out, "--set", &format!("{set},dim=16"), "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["gen-data", "--set", "bogus=1"])), 1);
    assert_eq!(code(&run(&["gen-data", "--config", "/nonexistent/run.toml"])), 1);
}

#[test]
fn grad_check_passes_and_a_flipped_gradient_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["grad-check", "--points", "5", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("gradients.csv").exists());
    let o = run(&["grad-check", "--points", "5", "--out", out, "--flip", "matmul"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
}
