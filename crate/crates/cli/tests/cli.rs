use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn activebayes(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activebayes"))
        .args(args)
        .env("ACTIVEBAYES_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const ONE_CELL: &str =
    r#"{"schema_version": 1, "functions": ["nonstationary-1"], "surrogates": ["gp-map"], "seeds": [4], "steps": 5}"#;

fn only_run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

#[test]
fn list_prints_the_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let out = activebayes(&["list"], tmp.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().any(|l| l.starts_with("discontinuous-1 | 1D | 200")), "{text}");
    assert!(text.contains("rays2d | 2D | 50x50"));

    let json = activebayes(&["list", "--json"], tmp.path());
    let rows: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 10);
    assert_eq!(rows[0]["name"], "discontinuous-1");
    assert_eq!(rows[0]["resolution"][0], 200);
}

#[test]
fn run_writes_deterministic_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "one.json", ONE_CELL);
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for root in [&a, &b] {
        let out = activebayes(&["run", "--config", cfg, "--jobs", "1", "--out", root.to_str().unwrap()], tmp.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let (da, db) = (only_run_dir(&a), only_run_dir(&b));
    let steps = fs::read(da.join("steps.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&steps).lines().count(), 6);
    assert_eq!(steps, fs::read(db.join("steps.csv")).unwrap());

    // Replaying the manifest reproduces the files.
    let c = tmp.path().join("c");
    let manifest = da.join("manifest.json");
    let out = activebayes(&["run", "--config", manifest.to_str().unwrap(), "--out", c.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let dc = only_run_dir(&c);
    assert_eq!(steps, fs::read(dc.join("steps.csv")).unwrap());
    assert_eq!(fs::read(da.join("final_prediction.csv")).unwrap(), fs::read(dc.join("final_prediction.csv")).unwrap());

    let report = activebayes(&["report", a.to_str().unwrap()], tmp.path());
    assert!(report.status.success(), "{}", stderr(&report));
    assert!(stdout(&report).starts_with("function,surrogate,architecture"));
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "one.json", ONE_CELL);
    let out = activebayes(&["run", "--config", cfg.to_str().unwrap(), "--dry-run"], tmp.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with(&format!("1 cells -> {}", tmp.path().display())), "{text}");
    assert!(!tmp.path().join("progress.log").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dkl = write_config(
        tmp.path(),
        "dkl.json",
        r#"{"schema_version": 1, "functions": ["rays2d"], "surrogates": ["dkl"], "seeds": [0]}"#,
    );
    let out = activebayes(&["run", "--config", dkl.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("surrogates[0]"), "{}", stderr(&out));

    let unknown = write_config(
        tmp.path(),
        "unknown.json",
        r#"{"schema_version": 1, "functions": ["sombrero"], "surrogates": ["gp"], "seeds": [0]}"#,
    );
    let out = activebayes(&["run", "--config", unknown.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sombrero"));

    let missing = tmp.path().join("absent.json");
    assert_eq!(activebayes(&["run", "--config", missing.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    assert_eq!(activebayes(&["bench", "fig9"], tmp.path()).status.code(), Some(2));
    assert_eq!(activebayes(&["frobnicate"], tmp.path()).status.code(), Some(2));

    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let cfg = write_config(tmp.path(), "one.json", ONE_CELL);
    let out = activebayes(
        &["run", "--config", cfg.to_str().unwrap(), "--out", blocker.join("runs").to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_cells_exit_with_one_and_the_rest_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "partial.json",
        r#"{"schema_version": 1, "functions": ["discontinuous-1", "discontinuous-3"], "surrogates": ["gp-map"],
            "seeds": [0], "steps": 3, "resolution": {"discontinuous-1": [6]}}"#,
    );
    let out = activebayes(&["run", "--config", cfg.to_str().unwrap(), "--jobs", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("FAILED")).count(), 1, "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("ok")).count(), 1, "{text}");
}

#[test]
fn bench_dry_runs_expand_the_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let count = |preset: &str| {
        let out = activebayes(&["bench", preset, "--dry-run"], tmp.path());
        assert!(out.status.success());
        stdout(&out).lines().count() - 1
    };
    assert_eq!(count("fig3"), 36);
    assert_eq!(count("fig5a"), 72);
    assert_eq!(count("fig5b"), 72);
    assert_eq!(count("fig6"), 24);
    let out = activebayes(&["bench", "fig6", "--dry-run", "--seeds", "5", "--steps", "7"], tmp.path());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 9);
    assert!(text.lines().skip(1).all(|l| l.contains("seed=5 steps=7")), "{text}");
    assert!(text.contains(&tmp.path().join("fig6").display().to_string()));
}

#[test]
fn bench_writes_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = activebayes(
        &["bench", "fig3", "--steps", "2", "--warmup", "30", "--samples", "20", "--seeds", "0", "--jobs", "1"],
        tmp.path(),
    );
    // Such a short warmup may leave a network fit with too many divergences;
    // a failed cell still gets its summary row.
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}\n{}", stdout(&out), stderr(&out));
    let root = tmp.path().join("fig3");
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 12);
    let curves = fs::read_to_string(root.join("learning_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 6 * 2);
    let tally = stdout(&out);
    assert!(tally.lines().any(|l| l.starts_with("mse: fbnn ")), "{tally}");
}
