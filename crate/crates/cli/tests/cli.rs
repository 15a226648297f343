use std::path::Path;
use std::process::{Command, Output};

fn edgesync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgesync"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../edgesync.toml")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn help_and_version_succeed() {
    let o = edgesync(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["gen-data", "profile-offline", "simulate", "compare"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert!(edgesync(&["--version"]).status.success());
}

#[test]
fn simulate_without_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = edgesync(&["simulate", "--seed", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_is_one_line_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[filter]\nupload_fraction = 1.5\n").unwrap();
    let out = dir.path().join("run");
    let o = edgesync(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error[config]:"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_stream_dir_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = edgesync(&[
        "profile-offline",
        "--streams",
        dir.path().join("nope").to_str().unwrap(),
        "--out",
        dir.path().join("p.txt").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!dir.path().join("p.txt").exists());
}

#[test]
fn gen_data_single_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.stream");
    let o = edgesync(&["gen-data", "--schedule", "abrupt-shift", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("EDGESYNC-STREAM v1 C=6 D=32 rate=2 n=2400"), "{}", &text[..60]);
    let o = edgesync(&["gen-data", "--schedule", "sideways", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn full_pipeline_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let o = edgesync(&["gen-data", "--schedule", "library", "--seed", "1", "--out", &p("data")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("data/edge_00.stream").exists());
    assert!(dir.path().join("data/student.ckpt").exists());

    let o = edgesync(&["profile-offline", "--streams", &p("data"), "--out", &p("profile.txt"), "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("profile.txt").exists());

    let o = edgesync(&[
        "simulate",
        "--config",
        &repo_config(),
        "--seed",
        "1",
        "--out-dir",
        &p("run"),
        "--streams",
        &p("data"),
        "--profile",
        &p("profile.txt"),
        "--trace",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["metrics.csv", "series.csv", "trace.csv", "config.toml", "summary.txt"] {
        assert!(dir.path().join("run").join(f).exists(), "{f} missing");
    }
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("edgesync: accuracy"));
}

#[test]
fn compare_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tiny.spec");
    std::fs::write(
        &spec,
        format!(
            "name = \"tiny\"\npolicies = [\"no_adapt\", \"edgesync\"]\ncameras = [2]\nseeds = [1, 2]\nconfig = {:?}\n\n\
             [[claims]]\ncheck = \"greater\"\na = \"edgesync\"\nb = \"no_adapt\"\n",
            repo_config()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = edgesync(&["compare", "--spec", spec.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("PASS | edgesync > no_adapt"), "{text}");
    for f in ["runs.csv", "table.txt", "verdicts.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}
