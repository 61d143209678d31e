use std::path::PathBuf;
use std::process::{Command, Output};

fn dasl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dasl"))
        .args(args)
        .env_remove("DASL_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn family() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../theories/family.dasl")
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(dasl(&["gradcheck", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(dasl(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let o = dasl(&["gradcheck", "--trials", "6", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn oracle_check_passes() {
    let o = dasl(&["oracle-check", "--trials", "40", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn compile_prints_the_plan() {
    let o = dasl(&["compile", &family()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("5 axioms"), "{text}");
    assert!(text.contains("parent: mlp 8-16-1 act tanh, 161 params"), "{text}");
}

#[test]
fn bad_theories_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.dasl");
    std::fs::write(&path, "sort D card 2;\naxiom a : forall x : D . Q(x);\n").unwrap();
    let o = dasl(&["compile", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Q"));
}

#[test]
fn mnist_without_data_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none");
    let o = dasl(&[
        "mnist",
        "--data-dir",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-images-idx3-ubyte"));
}

#[test]
fn train_then_eval_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dasl(&[
        "train",
        &family(),
        "--iterations",
        "400",
        "--lr",
        "0.01",
        "--eval-every",
        "100",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    // header plus one row per 100 iterations and the initial row
    assert_eq!(metrics.lines().count(), 1 + 400 / 100 + 1);
    let ckpt = dir.path().join("final.ckpt");
    let a = dasl(&["eval", &family(), "--checkpoint", ckpt.to_str().unwrap()]);
    let b = dasl(&["eval", &family(), "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("total loss"));
}
