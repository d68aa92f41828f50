use std::process::Command;

fn quadpose() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quadpose"))
}

#[test]
fn print_config_round_trips_through_train_config() {
    let out = quadpose().arg("print-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = quadpose::config::TrainConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg, quadpose::config::TrainConfig::default());
}

#[test]
fn unknown_config_key_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "schema_version = 1\nnot_a_key = 3\n").unwrap();
    let out = quadpose().args(["train", "--out"]).arg(dir.path().join("run")).arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn stage2_without_expert_source_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "schema_version = 1\n[expert]\ncollect = false\n").unwrap();
    let out = quadpose().args(["train", "--out"]).arg(dir.path().join("run")).arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("collect-amp"));
}

#[test]
fn missing_checkpoint_exits_with_code_3() {
    let out = quadpose().args(["eval", "--checkpoint", "/nonexistent/ckpt.qpck"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
