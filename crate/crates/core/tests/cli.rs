use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coronary-pcat")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn phantom_then_run_then_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    let o = cli(&["phantom", "--out", arg(&input), "--cases", "4", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cli(&["run", "--input", arg(&input), "--out", arg(&out), "--seed", "9", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("dataset.csv").is_file());
    assert!(out.join("case000").join("lesions.csv").is_file());

    let o = cli(&["stats", "--table", arg(&out.join("dataset.csv")), "--feature", "fai", "--criterion", "ffr"]);
    if o.status.success() {
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["feature"], "fai");
    } else {
        assert_eq!(o.status.code(), Some(2));
    }
}

#[test]
fn single_case_subcommands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    assert!(cli(&["phantom", "--out", arg(&input), "--cases", "1"]).status.success());
    let case = input.join("case000");
    for sub in ["classify", "stenosis", "pcat"] {
        let o = cli(&[sub, "--case", arg(&case), "--out", arg(&out)]);
        assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join("features.csv").is_file());
}

#[test]
fn train_and_predict_on_synthetic_table() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("t.csv");
    let model = tmp.path().join("m.json");
    let pred = tmp.path().join("p.csv");
    assert!(cli(&["dataset", "--synthetic", "--rows", "200", "--out", arg(&table)]).status.success());
    let o = cli(&["train", "--table", arg(&table), "--out", arg(&model), "--report", arg(&tmp.path().join("r.json"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cli(&["predict", "--model", arg(&model), "--table", arg(&table), "--out", arg(&pred)]).status.success());
    let text = std::fs::read_to_string(&pred).unwrap();
    assert!(text.starts_with("# coronary-pcat"));
    assert_eq!(text.lines().count(), 2 + 200);
}

#[test]
fn bad_input_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cli(&["classify", "--case", arg(&tmp.path().join("missing")), "--out", arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sede": 1}"#).unwrap();
    let o = cli(&["--config", arg(&cfg), "phantom", "--out", arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_case_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    assert!(cli(&["phantom", "--out", arg(&input), "--cases", "2"]).status.success());
    std::fs::remove_file(input.join("case001").join("lumen.vol.raw")).unwrap();
    let o = cli(&["run", "--input", arg(&input), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("case001"));
}
