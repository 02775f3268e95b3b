use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nases(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nases")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "[space]\nlayers = 4\nskips = false\n\
         [autoencoder]\nembed_dim = 8\nhidden_dim = 16\nepochs = 2\nbatches_per_epoch = 4\n\
         holdout_size = 32\nlr = 1e-3\nsampling = \"one_hot\"\n\
         [search]\niterations = 12\n\
         [output]\ndir = \"{}\"\n{extra}",
        dir.join("run").display()
    );
    let path = dir.join("nases.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&nases(&[])), 1);
    assert_eq!(code(&nases(&["frobnicate"])), 1);
    assert_eq!(code(&nases(&["search", "--iterations", "many"])), 1);
    assert_eq!(code(&nases(&["search", "--config", "/definitely/not/here.toml"])), 1);
    assert_eq!(code(&nases(&["eval-arch", "--arch", "not json"])), 1);
    assert_eq!(code(&nases(&["report", "--run", "/definitely/not/here"])), 1);
}

#[test]
fn help_exits_cleanly() {
    let out = nases(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["pretrain", "search", "final-train", "eval-arch", "enumerate", "report"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn invalid_config_contents_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[controller]\nsigma = 0.0\n").unwrap();
    assert_eq!(code(&nases(&["search", "--config", path.to_str().unwrap()])), 1);
    fs::write(&path, "[space]\nlayerz = 3\n").unwrap();
    assert_eq!(code(&nases(&["search", "--config", path.to_str().unwrap()])), 1);
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[evaluator]\nkind = \"child\"\ndata = \"cifar\"\ncifar_dir = \"/definitely/not/here\"\n",
    );
    let arch = r#"{"layers":[{"op":"identity","skips":[]},{"op":"identity","skips":[]},{"op":"identity","skips":[]},{"op":"identity","skips":[]}]}"#;
    let out = nases(&["eval-arch", "--config", &cfg, "--arch", arch]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn enumerate_lists_the_whole_space() {
    let out = nases(&["enumerate", "--layers", "4", "--no-skips", "--evaluator", "synthetic"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("arch_json,reward"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 625);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",1")).count(), 1);
}

#[test]
fn enumerate_refuses_large_spaces() {
    assert_eq!(code(&nases(&["enumerate", "--layers", "15"])), 2);
}

#[test]
fn search_pretrains_then_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = nases(&["search", "--config", &cfg, "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["records.csv", "report.json", "best_arch.json", "config.toml", "autoencoder/autoencoder.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let best = String::from_utf8(out.stdout).unwrap();
    assert_eq!(best.trim(), fs::read_to_string(run.join("best_arch.json")).unwrap());
    let records = fs::read_to_string(run.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 13);

    let out = nases(&["report", "--run", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(run.join("summary.json").exists());

    let out = nases(&["eval-arch", "--config", &cfg, "--arch", best.trim()]);
    assert_eq!(code(&out), 0);
    let reward: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(reward["value"].as_f64().unwrap() >= 0.0);
}

#[test]
fn search_resumes_from_a_stopped_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&nases(&["search", "--config", &cfg, "--stop-after", "5"])), 0);
    let partial = fs::read_to_string(dir.path().join("run/records.csv")).unwrap();
    assert_eq!(partial.lines().count(), 6);
    assert_eq!(code(&nases(&["search", "--config", &cfg, "--resume"])), 0);
    let resumed = fs::read(dir.path().join("run/records.csv")).unwrap();

    let other = tempfile::tempdir().unwrap();
    let cfg2 = write_config(other.path(), "");
    assert_eq!(code(&nases(&["search", "--config", &cfg2])), 0);
    assert_eq!(resumed, fs::read(other.path().join("run/records.csv")).unwrap());
}

#[test]
fn pretrain_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ae");
    let out = nases(&[
        "pretrain",
        "--layers",
        "3",
        "--embed-dim",
        "4",
        "--hidden-dim",
        "8",
        "--epochs",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = fs::read(out_dir.join("encoder.bin")).unwrap();
    assert_eq!(&bytes[..8], b"NASESPK1");
}
