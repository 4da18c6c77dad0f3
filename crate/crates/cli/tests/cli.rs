use std::path::Path;
use std::process::{Command, Output};

fn eigenrate(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eigenrate"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("EIGENRATE_THREADS", t),
        None => cmd.env_remove("EIGENRATE_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const QUICK: &str = "\
[output]
formats = csv, json, gnuplot

[p1]
kind = laplace-1d
family = p1
levels = 16, 32, 64, 128, 256
modes = 1

[square]
kind = spectrum
domain = square
count = 20
weyl_from = 50
weyl_to = 200

[too-strict]
kind = laplace-1d
family = p1
levels = 8, 16, 32, 64
eig_tol = 0.0000001
";

#[test]
fn passing_study_exits_zero_and_writes_every_format() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.cfg", QUICK);
    let out = tmp.path().join("out");
    let o = eigenrate(&["p1", "--config", &cfg, "--out", out.to_str().unwrap(), "--seq"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for ext in ["json", "csv", "dat", "gp", "timings.json"] {
        assert!(out.join(format!("p1.{ext}")).is_file(), "missing p1.{ext}");
    }
    assert!(out.join("summary.json").is_file());
    let json = std::fs::read_to_string(out.join("p1.json")).unwrap();
    assert!(json.contains("\"schema\": \"eigenrate/v1\""));
    let csv = std::fs::read_to_string(out.join("p1.csv")).unwrap();
    assert!(csv.starts_with('#') || csv.lines().next().unwrap().contains("level"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS p1"));
}

#[test]
fn failing_gate_gives_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.cfg", QUICK);
    let out = tmp.path().join("out");
    let o = eigenrate(&["too-strict", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("eigen-rate"));
}

#[test]
fn config_errors_exit_two_with_line_context() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", "[a]\nkind = laplace-1d\nlevelz = 8, 16\n");
    let o = eigenrate(&["a", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("levelz"), "{err}");

    let cfg = write(tmp.path(), "ok.cfg", QUICK);
    let o = eigenrate(&["nope", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(2));

    let o = eigenrate(&["p1", "--config", &cfg], Some("many"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.cfg", QUICK);
    let out = tmp.path().join("out");
    let o = eigenrate(
        &["p1", "--config", &cfg, "--out", out.to_str().unwrap(), "--levels", "3", "--family", "p2", "--seq"],
        None,
    );
    assert!(o.status.code().is_some());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("p1.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["family"], "p2");
    assert_eq!(json["config"]["levels"].as_array().unwrap().len(), 3);
    // a family that cannot live on intervals is rejected before running
    let o = eigenrate(&["p1", "--config", &cfg, "--family", "q2"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.cfg", QUICK);
    let mut reports = Vec::new();
    for (i, t) in ["0", "1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let o = eigenrate(&["all", "--config", &cfg, "--out", out.to_str().unwrap()], Some(t));
        assert_eq!(o.status.code(), Some(1), "too-strict fails, the rest run");
        reports.push((
            std::fs::read(out.join("p1.json")).unwrap(),
            std::fs::read(out.join("square.json")).unwrap(),
        ));
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
}
