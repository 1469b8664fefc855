use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pnph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnph")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|r| r.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

const CELL: &str = r#"{
  "geometry": { "preset": "straight_channel_2d", "params": { "p": 0.25, "n": 16 }, "sigma": -0.1, "epsilon": 0.5 },
  "run": { "model": "cell" }
}"#;

const MACRO: &str = r#"{
  "geometry": { "preset": "straight_channel_2d", "params": { "n": 8 }, "sigma": -0.1, "epsilon": 0.5 },
  "run": { "model": "macro", "grid": { "n": [16], "lengths": [1.0] }, "dt": 0.01, "steps": 4,
           "initial": { "amplitude": 0.2, "neutralize": true } }
}"#;

#[test]
fn cell_run_writes_tensors_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), CELL);
    let out = dir.path().join("out");
    let o = pnph(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&out), ["manifest.json", "tensors.json"]);
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("tensors.json")).unwrap()).unwrap();
    assert_eq!(t["model"], "cell");
    let d00 = t["D_hat"][0][0].as_f64().unwrap();
    assert!((d00 - 0.25).abs() < 1e-10, "{d00}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["model"], "cell");
}

#[test]
fn output_directory_defaults_to_config() {
    let dir = TempDir::new().unwrap();
    let body = CELL.replace(
        r#""run": { "model": "cell" }"#,
        &format!(r#""run": {{ "model": "cell" }}, "output": {{ "directory": "{}" }}"#, dir.path().join("res").display()),
    );
    let cfg = write_config(dir.path(), &body);
    assert!(pnph(&["run", &cfg]).status.success());
    assert_eq!(listing(&dir.path().join("res")), ["manifest.json", "tensors.json"]);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MACRO);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(pnph(&["run", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(pnph(&["run", &cfg, "--out", b.to_str().unwrap()]).status.success());
    let names = listing(&a);
    assert_eq!(names, ["manifest.json", "series.csv", "summary.json", "tensors.json"]);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for body in [
        "{ not json",
        r#"{ "geometry": { "preset": "straight_channel_2d" }, "run": { "model": "cell" }, "extra": 1 }"#,
        r#"{ "geometry": { "preset": "no_such_preset" }, "run": { "model": "cell" } }"#,
        r#"{ "geometry": { "preset": "straight_channel_2d", "params": { "p": 1.5 } }, "run": { "model": "cell" } }"#,
        &MACRO.replace(r#""dt": 0.01"#, r#""dt": -0.01"#),
    ] {
        let cfg = write_config(dir.path(), body);
        let o = pnph(&["run", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(listing(&out).is_empty(), "{body}");
        assert_eq!(pnph(&["validate", &cfg]).status.code(), Some(2));
    }
}

#[test]
fn missing_config_exits_2() {
    assert_eq!(pnph(&["run", "/nonexistent/run.json"]).status.code(), Some(2));
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MACRO);
    let o = pnph(&["validate", &cfg]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).ends_with(": ok\n"));
    assert!(listing(dir.path()) == ["run.json"]);
}

#[test]
fn conductivity_report() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
      "geometry": { "preset": "rectangle_pore_2d", "params": { "n": 24 }, "sigma": -0.1, "epsilon": 0.5 },
      "run": { "model": "conductivity" },
      "output": { "formats": ["json"] }
    }"#;
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("out");
    let o = pnph(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("conductivity.json")).unwrap()).unwrap();
    assert_eq!(r["model"], "conductivity");
    let theta = r["theta_1"].as_f64().unwrap();
    let bound = r["bound"].as_f64().unwrap();
    assert!(theta > 0.0 && bound > 0.0 && bound <= theta * (1.0 + 1e-9), "{theta} {bound}");
    assert!(r["rectangle"].is_array());
}

#[test]
fn presets_lists_every_geometry() {
    let o = pnph(&["presets"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in pnph::geometry::PRESETS {
        assert!(text.contains(name), "{name}");
    }
}
