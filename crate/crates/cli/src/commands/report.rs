use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::output::{Cell, SUMMARY_FILE};
use crate::{row, CliError, CliResult, Params, Run};

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
        Value::String(s) => match s.as_str() {
            "inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            _ => f64::NAN,
        },
        _ => f64::NAN,
    }
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One markdown table per run directory, plus a flat CSV of every check.
pub fn report(p: &Params, run: &mut Run) -> CliResult<()> {
    let dirs = p.str_list("run_dirs")?;
    let mut md = String::from("# conc-lab report\n");
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut failing_runs = Vec::new();
    for dir in &dirs {
        let path = Path::new(dir).join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::InputMissing(format!("{}: {e}", path.display())))?;
        let summary: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::ConfigInvalid(format!("{} is not a valid summary: {e}", path.display())))?;
        let command = summary.get("command").and_then(Value::as_str).unwrap_or("unknown");
        let status = summary.get("status").and_then(Value::as_str).unwrap_or("fail");
        if status != "pass" {
            failing_runs.push(dir.clone());
        }
        let _ = write!(md, "\n## {command}: `{dir}`\n\nstatus: **{status}**\n\n| check | result | value | limit |\n|---|---|---|---|\n");
        let checks = summary.get("checks").and_then(Value::as_array).cloned().unwrap_or_default();
        for c in &checks {
            let name = c.get("name").and_then(Value::as_str).unwrap_or("?");
            let passed = c.get("passed").and_then(Value::as_bool).unwrap_or(false);
            let value = c.get("value").cloned().unwrap_or(Value::Null);
            let limit = c.get("limit").cloned().unwrap_or(Value::Null);
            let tag = if passed { "pass" } else { "**FAIL**" };
            let _ = writeln!(md, "| {name} | {tag} | {} | {} |", show(&value), show(&limit));
            rows.push(row![dir.as_str(), command, name, passed, as_f64(&value), as_f64(&limit)]);
            run.check(&format!("{dir}:{name}"), passed, as_f64(&value), as_f64(&limit));
        }
        if checks.is_empty() {
            // a run without checks still carries its overall status
            run.check(&format!("{dir}:status"), status == "pass", f64::NAN, f64::NAN);
        }
    }
    run.write_text("report.md", &md)?;
    run.write_csv("report.csv", &["run", "command", "check", "passed", "value", "limit"], &rows)?;
    run.result("runs", json!(dirs.len()));
    run.result("failing_runs", json!(failing_runs));
    Ok(())
}
