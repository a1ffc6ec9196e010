use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_conc-lab"));
    cmd.env("CONC_LAB_THREADS", "2");
    cmd
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    bin().args(args).status().unwrap().code().unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn two_point_files(tmp: &TempDir) -> (String, String) {
    let a = write(tmp.path(), "a.csv", "x,w\n0,0.5\n1,0.5\n");
    let b = write(tmp.path(), "b.csv", "x,w\n0,0.5\n2,0.5\n");
    (a.display().to_string(), b.display().to_string())
}

#[test]
fn two_atom_transport_costs_one_half() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = two_point_files(&tmp);
    let out = tmp.path().join("t");
    let code = run(&["--out", out.to_str().unwrap(), "transport", &a, &b, "--cost", "quadratic", "--plan"]);
    assert_eq!(code, 0);
    let s = summary(&out);
    assert_eq!(s["status"], "pass");
    assert!((s["results"]["cost"].as_f64().unwrap() - 0.5).abs() <= 1e-12);
    let plan = std::fs::read_to_string(out.join("plan.csv")).unwrap();
    assert_eq!(plan.lines().count(), 3);
}

#[test]
fn malformed_cost_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = two_point_files(&tmp);
    let out = tmp.path().join("t");
    assert_eq!(run(&["--out", out.to_str().unwrap(), "transport", &a, &b, "--cost", "power:q=2"]), 2);
    assert_eq!(run(&["--out", out.to_str().unwrap(), "transport", &a, &b, "--bogus-flag"]), 2);
}

#[test]
fn missing_input_exits_three() {
    let tmp = TempDir::new().unwrap();
    let (a, _) = two_point_files(&tmp);
    let out = tmp.path().join("t");
    let missing = tmp.path().join("nope.csv");
    assert_eq!(run(&["--out", out.to_str().unwrap(), "transport", &a, missing.to_str().unwrap()]), 3);
    let cfg = tmp.path().join("absent.toml");
    assert_eq!(run(&["--config", cfg.to_str().unwrap()]), 3);
}

#[test]
fn sanov_battery_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    assert_eq!(run(&["--out", out.to_str().unwrap(), "sanov-check"]), 0);
    let s = summary(&out);
    assert!(s["results"]["worst_slack"].as_f64().unwrap() >= -1e-12);
    assert_eq!(s["results"]["configs"], 100);
}

#[test]
fn config_file_paths_are_relative_to_the_file_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    two_point_files(&tmp);
    let cfg = write(
        tmp.path(),
        "exp.toml",
        "command = \"transport\"\nseed = 3\noutput_dir = \"from-config\"\n[parameters]\na = \"a.csv\"\nb = \"b.csv\"\ncost = \"power:p=1\"\n",
    );
    assert_eq!(run(&["--config", cfg.to_str().unwrap()]), 0);
    let s = summary(&tmp.path().join("from-config"));
    assert_eq!(s["seed"], 3);
    assert!((s["results"]["cost"].as_f64().unwrap() - 0.5).abs() <= 1e-12);

    let out = tmp.path().join("override");
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "transport", "--cost", "quadratic"]), 0);
    assert_eq!(summary(&out)["parameters"]["cost"], "quadratic");

    // a subcommand that disagrees with the file is rejected
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "sanov-check"]), 2);
}

fn strip_timestamp(mut v: Value) -> Value {
    v["metadata"].as_object_mut().unwrap().remove("timestamp");
    v
}

fn assert_identical_runs(args: &[&str], artifacts: &[&str]) {
    let tmp = TempDir::new().unwrap();
    let dirs = [tmp.path().join("one"), tmp.path().join("two")];
    for d in &dirs {
        let mut full = vec!["--out", d.to_str().unwrap(), "--seed", "11"];
        full.extend_from_slice(args);
        bin().args(&full).status().unwrap();
    }
    for name in artifacts {
        let a = std::fs::read(dirs[0].join(name)).unwrap();
        let b = std::fs::read(dirs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs between identical runs");
    }
    assert_eq!(strip_timestamp(summary(&dirs[0])), strip_timestamp(summary(&dirs[1])));
}

#[test]
fn runs_are_deterministic_given_the_seed() {
    let tmp = TempDir::new().unwrap();
    let mu = write(tmp.path(), "mu.csv", "x,w\n0,0.3\n1,0.7\n");
    let mu = mu.to_str().unwrap();
    assert_identical_runs(&["sanov-check", "--configs", "30"], &["sanov.csv"]);
    assert_identical_runs(&["rate", "--measure", mu], &["curve.csv", "plot_rate.csv"]);
    assert_identical_runs(&["concentrate", "--measure", mu, "--n", "6", "--trials", "500"], &["profile.csv"]);
    assert_identical_runs(&["dual-check", "--measure", mu, "--scale", "0.5", "--count", "40"], &["dual.csv"]);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let mu = write(tmp.path(), "mu.csv", "x,w\n0,0.3\n1,0.7\n");
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("c{threads}"));
        let status = bin()
            .env("CONC_LAB_THREADS", threads)
            .args(["--out", out.to_str().unwrap(), "concentrate", "--measure", mu.to_str().unwrap(), "--n", "6", "--trials", "800"])
            .status()
            .unwrap();
        assert!(status.success());
        csvs.push(std::fs::read(out.join("profile.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn summaries_match_the_schema() {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/summary.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();

    let tmp = TempDir::new().unwrap();
    let (a, b) = two_point_files(&tmp);
    let mu = write(tmp.path(), "mu.csv", "x,w\n0,0.3\n1,0.7\n").display().to_string();
    let out = |n: &str| tmp.path().join(n).display().to_string();
    let runs: Vec<(String, Vec<String>)> = vec![
        (out("t"), vec!["transport".into(), a, b]),
        (out("r"), vec!["rate".into(), "--measure".into(), mu.clone()]),
        (out("d"), vec!["dual-check".into(), "--measure".into(), mu.clone(), "--scale".into(), "1".into(), "--count".into(), "20".into()]),
        (out("c"), vec!["concentrate".into(), "--measure".into(), mu, "--n".into(), "4".into(), "--trials".into(), "200".into()]),
    ];
    for (dir, args) in &runs {
        let mut full = vec!["--out".to_string(), dir.clone()];
        full.extend(args.iter().cloned());
        bin().args(&full).status().unwrap();
        let s = summary(Path::new(dir));
        let errors: Vec<String> = validator.iter_errors(&s).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{dir}: {errors:?}");
    }
}

#[test]
fn report_collects_runs() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = two_point_files(&tmp);
    let mu = write(tmp.path(), "mu.csv", "x,w\n0,0.3\n1,0.7\n").display().to_string();
    let p = |n: &str| tmp.path().join(n).display().to_string();

    assert_eq!(run(&["--out", &p("empty"), "report"]), 0);
    assert!(std::fs::read_to_string(tmp.path().join("empty/report.md")).unwrap().starts_with("# conc-lab report"));

    assert_eq!(run(&["--out", &p("t"), "transport", &a, &b]), 0);
    assert_eq!(run(&["--out", &p("ok"), "report", &p("t")]), 0);

    // infinite-scale dual check on a finite support must fail
    assert_eq!(run(&["--out", &p("d"), "dual-check", "--measure", &mu, "--scale", "1", "--count", "100"]), 1);
    assert_eq!(run(&["--out", &p("mixed"), "report", &p("t"), &p("d")]), 1);
    let csv = std::fs::read_to_string(tmp.path().join("mixed/report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains("no_dual_violation") && l.contains("false")));
    let md = std::fs::read_to_string(tmp.path().join("mixed/report.md")).unwrap();
    assert!(md.contains("**FAIL**"));

    assert_eq!(run(&["--out", &p("gone"), "report", &p("does-not-exist")]), 3);
}
