use std::path::Path;
use std::process::{Command, Output};

use mobweigh::features::{feature_table_header, read_feature_table};

fn mobweigh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobweigh"))
        .args(args)
        .env_remove("MOBWEIGH_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mobweigh(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, animals: usize) -> String {
    let d = dir.to_str().unwrap();
    ok(&["synth", "--out", d, "--animals", &animals.to_string(), "--seed", "7"]);
    dir.join("manifest.json").to_str().unwrap().to_string()
}

fn small_grid(dir: &Path) -> String {
    let path = dir.join("grid.json");
    std::fs::write(
        &path,
        r#"{"forest": [{"n_estimators": 5}, {"n_estimators": 5, "max_depth": 3}]}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_bad_flags() {
    let out = mobweigh(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("preprocess"));
    assert_eq!(mobweigh(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(
        mobweigh(&[
            "preprocess",
            "--manifest",
            "m.json",
            "--out",
            "o",
            "--first-month",
            "2022-02"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn preprocess_writes_the_feature_table() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 108);
    let out = dir.path().join("prep");
    ok(&["preprocess", "--manifest", &manifest, "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(out.join("features.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), feature_table_header().join(","));
    let table = read_feature_table(text.as_bytes()).unwrap();
    assert_eq!(table.rows(), 756);
    assert_eq!(table.cols(), 11);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("preprocess_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["feature_rows"], 756);
}

#[test]
fn one_model_one_variant_fills_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 12);
    let grid = small_grid(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "run",
            "--manifest",
            &manifest,
            "--out",
            out.to_str().unwrap(),
            "--variant",
            "baseline",
            "--model",
            "forest",
            "--grid",
            &grid,
            "--folds",
            "3",
        ]);
        out
    };
    let a = run("a");
    let heat = std::fs::read_to_string(a.join("r2_heatmap.csv")).unwrap();
    let lines: Vec<&str> = heat.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("RF,"));
    assert_eq!(lines[1].split(',').skip(1).filter(|c| !c.is_empty()).count(), 1);
    assert!(a.join("forest_test.csv").exists() && a.join("forest_test_kg.csv").exists());

    let b = run("b");
    assert_eq!(
        std::fs::read(a.join("report.json")).unwrap(),
        std::fs::read(b.join("report.json")).unwrap()
    );

    let again = dir.path().join("again");
    ok(&[
        "report",
        "--from",
        a.join("report.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--metric-space",
        "kg",
    ]);
    assert!(again.join("forest_test_kg.csv").exists());
    assert!(!again.join("forest_test.csv").exists());
    assert_eq!(
        std::fs::read(a.join("r2_heatmap.csv")).unwrap(),
        std::fs::read(again.join("r2_heatmap.csv")).unwrap()
    );
}

#[test]
fn stats_writes_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 20);
    let out = dir.path().join("stats");
    let said = ok(&["stats", "--manifest", &manifest, "--out", out.to_str().unwrap()]);
    assert!(said.contains("age vs weight"));
    let text = std::fs::read_to_string(out.join("stats.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "term,coefficient,stderr,t,p");
    assert!(text.lines().count() > 5);
}

#[test]
fn no_eligible_animals_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 5);
    let weights = dir.path().join("weights.csv");
    let header = std::fs::read_to_string(&weights)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(&weights, header + "\n").unwrap();
    let out = dir.path().join("prep");
    let res = mobweigh(&["preprocess", "--manifest", &manifest, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
    assert!(!out.join("features.csv").exists());
}

#[test]
fn unknown_grid_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 5);
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"forests": []}"#).unwrap();
    let res = mobweigh(&[
        "run",
        "--manifest",
        &manifest,
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("grid"));
}
