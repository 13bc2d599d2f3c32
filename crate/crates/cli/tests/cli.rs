use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use foliation_cli::scenario::{parse_scenario, serialize_scenario};
use foliation_cli::{execute, Command, Overrides};
use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn report(cmd: Command, file: &str) -> Value {
    let text = fs::read_to_string(scenarios().join(file)).unwrap();
    let a = execute(cmd, &text, &Overrides::default()).unwrap();
    serde_json::from_str(&a.report).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("foliation-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn radial_is_dicritical() {
    let v = report(Command::Classify, "radial.scn");
    assert_eq!(v["schema_version"], 1);
    let tags: Vec<&str> = v["result"]["singularities"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|s| s["tag"].as_str())
        .collect();
    assert_eq!(tags, ["dicritical_linear"]);
}

#[test]
fn linear_germ_has_no_error() {
    let v = report(Command::Renorm, "renorm_linear.scn");
    assert_eq!(v["result"]["experiments"][0]["sup_error"].as_f64(), Some(0.0));
}

#[test]
fn seed_override_wins() {
    let text = fs::read_to_string(scenarios().join("sink_divisor.scn")).unwrap();
    let ov = Overrides { seed: Some(99), ..Overrides::default() };
    let v: Value = serde_json::from_str(&execute(Command::Inspect, &text, &ov).unwrap().report).unwrap();
    assert_eq!(v["seed"], 99);
}

#[test]
fn scenarios_round_trip() {
    for entry in fs::read_dir(scenarios()).unwrap() {
        let p = entry.unwrap().path();
        let s = parse_scenario(&fs::read_to_string(&p).unwrap()).unwrap();
        let again = parse_scenario(&serialize_scenario(&s)).unwrap();
        assert_eq!(serialize_scenario(&again), serialize_scenario(&s), "{}", p.display());
    }
}

#[test]
fn syntax_error_writes_error_json() {
    let dir = scratch("syntax");
    let scn = dir.join("bad.scn");
    fs::write(&scn, "name: bad\nomega: (x dy\n").unwrap();
    let status = Proc::new(env!("CARGO_BIN_EXE_foliation-lab"))
        .args(["inspect", "--scenario"])
        .arg(&scn)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("out/error.json")).unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "syntax");
    assert_eq!(v["error"]["line"], 2);
    assert_eq!(v["error"]["column"], 8);
}

#[test]
fn missing_file_is_io_error() {
    let dir = scratch("missing");
    let status = Proc::new(env!("CARGO_BIN_EXE_foliation-lab"))
        .args(["classify", "--scenario"])
        .arg(dir.join("nope.scn"))
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("error.json")).unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "io");
}

#[test]
fn trace_writes_portrait() {
    let dir = scratch("trace");
    let status = Proc::new(env!("CARGO_BIN_EXE_foliation-lab"))
        .args(["trace", "--scenario"])
        .arg(scenarios().join("sink_divisor.scn"))
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["trace.json", "portrait.svg", "trace.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}
