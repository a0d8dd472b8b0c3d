use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3

[model]
stage_channels = [4, 4, 8, 8, 8]
decoder_channels = [8]
clm_dim = 4

[model.encoder]
layers = 1
hidden = 8
heads = 2
ffn = 16

[scene]
count_range = [0, 12]

[optim]
epochs = 1
batch_size = 2
"#;

fn ldfnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldfnet")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));

    let out = ldfnet(&["gen", "--out", s(&data), "--n-train", "4", "--n-val", "2", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = ldfnet(&["train", "--data", s(&data), "--out", s(&run), "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("model.bin").exists());

    // config comes from the checkpoint directory
    let out = ldfnet(&["eval", "--checkpoint", s(&run), "--data", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("image,gt_count,"), "{stdout}");
    assert_eq!(lines.len(), 1 + 2 + 1, "{stdout}");

    let csv = tmp.path().join("m.csv");
    let out = ldfnet(&["eval", "--checkpoint", s(&run), "--data", s(&data), "--split", "all", "--out", s(&csv)]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 6 + 1);
}

#[test]
fn exit_codes_separate_config_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[optim]\nbogus = 1\n").unwrap();
    let missing = tmp.path().join("nowhere");

    let out = ldfnet(&["train", "--data", s(&missing), "--out", s(tmp.path()), "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = ldfnet(&["train", "--data", s(&missing), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));

    let out = ldfnet(&["train", "--data", s(&missing), "--out", s(tmp.path()), "--mask-ratio", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ldfnet(&["ablate", "--data", s(&missing), "--out", s(tmp.path()), "--axis", "depth", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablate_writes_sweep_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let (data, out_dir) = (tmp.path().join("data"), tmp.path().join("sweep"));
    assert!(ldfnet(&["gen", "--out", s(&data), "--n-train", "4", "--n-val", "2", "--config", s(&cfg)]).status.success());
    let out = ldfnet(&[
        "ablate", "--data", s(&data), "--out", s(&out_dir), "--axis", "alpha", "--values", "0,1", "--seeds", "0", "--config",
        s(&cfg),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep_alpha.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("alpha=0: median val MAE") && stdout.contains("alpha=1: median val MAE"), "{stdout}");
}

#[test]
fn selftest_status_follows_the_table() {
    let out = ldfnet(&["selftest"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("check"), "{stdout}");
    assert!(stdout.contains("grad conv2d") && stdout.contains("matching distance gap"), "{stdout}");
    let any_fail = stdout.lines().any(|l| l.ends_with("FAIL"));
    assert_eq!(out.status.success(), !any_fail, "{stdout}");
}
