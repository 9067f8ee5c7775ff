use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_storypoint"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error is JSON")
}

fn small_config(dir: &Path, projects: &[&str]) -> PathBuf {
    let projects: Vec<String> = projects
        .iter()
        .map(|p| fixtures().join(p).display().to_string())
        .collect();
    let config = serde_json::json!({
        "projects": projects,
        "feature_source": "built-in-tfidf",
        "models": ["comparative-noval"],
        "k_values": [1],
        "repeats_comparative": 2,
        "train": { "max_epochs": 5 }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn missing_config_reports_json_error() {
    let out = bin().args(["run", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(error_json(&out)["error"]["code"], "config");
}

#[test]
fn run_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &["jirasoftware.csv", "usergrid.csv"]);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--projects", "usergrid", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("over 1 projects"));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["project"], "usergrid");

    let rendered = dir.path().join("rendered");
    let out = bin()
        .arg("report")
        .arg("--input")
        .arg(out_dir.join("report.json"))
        .arg("--out")
        .arg(&rendered)
        .args(["--format", "markdown", "--reference"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = std::fs::read_to_string(rendered.join("report.md")).unwrap();
    assert!(md.contains("usergrid"));
    assert!(!rendered.join("report.csv").exists());
}

#[test]
fn unknown_project_filter_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), &["usergrid.csv"]);
    let out = bin()
        .args(["run", "--projects", "nosuch", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(error_json(&out)["error"]["code"], "config");
}

#[test]
fn failed_project_exits_nonzero_with_details() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "issuekey,title,description,storypoint,split\nX-1,a,b,3,train\n").unwrap();
    let config = serde_json::json!({
        "projects": [broken.display().to_string(), fixtures().join("usergrid.csv").display().to_string()],
        "models": ["comparative-noval"],
        "k_values": [1],
        "repeats_comparative": 1,
        "train": { "max_epochs": 2 }
    });
    let path = dir.path().join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg("--config").arg(&path).arg("--out").arg(&out_dir).output().unwrap();
    assert!(!out.status.success());
    let err = error_json(&out);
    assert_eq!(err["error"]["code"], "project_failures");
    assert_eq!(err["error"]["failed_projects"][0]["project"], "broken");
    assert!(out_dir.join("report.md").exists());
}

#[test]
fn summarize_prints_dataset_shapes() {
    let out = bin().arg("summarize").arg(fixtures().join("usergrid.csv")).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["usergrid"]["n"], 482);
}
