//! Typed access to the merged key-value parameters of an experiment.

use std::path::Path;

use serde_json::{Map, Value};

use crate::{CliError, CliResult};

/// Parameters naming input files; relative paths in a config file are
/// resolved against the file's directory.
const PATH_KEYS: [&str; 5] = ["a", "b", "measure", "nu", "run_dirs"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    values: Map<String, Value>,
}

fn bad(key: &str, expected: &str, v: &Value) -> CliError {
    CliError::ConfigInvalid(format!("parameter `{key}` must be {expected}, got {v}"))
}

impl Params {
    pub fn from_toml(table: &toml::Table, base: Option<&Path>) -> CliResult<Self> {
        let mut values = Map::new();
        for (k, v) in table {
            let key = k.replace('-', "_");
            let mut json = serde_json::to_value(v).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
            if let (Some(base), true) = (base, PATH_KEYS.contains(&key.as_str())) {
                json = rebase(json, base);
            }
            values.insert(key, json);
        }
        Ok(Self { values })
    }

    /// Command-line flags win over file values; absent flags are ignored.
    pub fn overlay(&mut self, flags: Value) {
        if let Value::Object(map) = flags {
            for (k, v) in map {
                let skip = v.is_null() || matches!(&v, Value::Array(a) if a.is_empty());
                if !skip {
                    self.values.insert(k.replace('-', "_"), v);
                }
            }
        }
    }

    pub fn insert(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    pub fn as_json(&self) -> Value {
        Value::Object(self.values.clone())
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn str(&self, key: &str) -> CliResult<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(bad(key, "a string", v)),
        }
    }

    pub fn require_str(&self, key: &str) -> CliResult<String> {
        self.str(key)?.ok_or_else(|| CliError::ConfigInvalid(format!("missing required parameter `{key}`")))
    }

    pub fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.as_f64().filter(|x| x.is_finite()).map(Some).ok_or_else(|| bad(key, "a finite number", v)),
        }
    }

    pub fn u64(&self, key: &str) -> CliResult<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| bad(key, "a nonnegative integer", v)),
        }
    }

    pub fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn bool(&self, key: &str) -> CliResult<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(v) => Err(bad(key, "true or false", v)),
        }
    }

    /// `a:b:step` string or an explicit array of numbers.
    pub fn grid(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => parse_grid(s).map(Some).map_err(|m| CliError::ConfigInvalid(format!("`{key}`: {m}"))),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| bad(key, "an array of numbers", v)))
                .collect::<CliResult<Vec<f64>>>()
                .map(Some),
            Some(v) => Err(bad(key, "`a:b:step` or an array of numbers", v)),
        }
    }

    /// Comma-separated string or an array of integers.
    pub fn usize_list(&self, key: &str) -> CliResult<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => s
                .split(',')
                .map(|part| part.trim().parse::<usize>().map_err(|_| bad(key, "a comma-separated list of integers", &Value::String(s.clone()))))
                .collect::<CliResult<Vec<_>>>()
                .map(Some),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_u64().map(|x| x as usize).ok_or_else(|| bad(key, "an array of integers", v)))
                .collect::<CliResult<Vec<_>>>()
                .map(Some),
            Some(v) => Err(bad(key, "a list of integers", v)),
        }
    }

    pub fn str_list(&self, key: &str) -> CliResult<Vec<String>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Value::String(s)) => Ok(vec![s.clone()]),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| bad(key, "an array of strings", v)))
                .collect(),
            Some(v) => Err(bad(key, "a list of strings", v)),
        }
    }
}

fn rebase(v: Value, base: &Path) -> Value {
    match v {
        Value::String(s) if Path::new(&s).is_relative() => Value::String(base.join(&s).to_string_lossy().into_owned()),
        Value::Array(items) => Value::Array(items.into_iter().map(|x| rebase(x, base)).collect()),
        other => other,
    }
}

/// Inclusive grid `a:b:step`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected `a:b:step`, got `{s}`"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number in `{s}`")))
        .collect::<Result<_, _>>()?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if !(a.is_finite() && b.is_finite() && step > 0.0 && step.is_finite() && b >= a) {
        return Err(format!("`{s}` needs a ≤ b and step > 0"));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(format!("`{s}` has {count} points; at most 100000 are allowed"));
    }
    Ok((0..count).map(|i| a + step * i as f64).collect())
}
