use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Serialize)]
pub struct ScenarioInfo {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub scenario: ScenarioInfo,
    pub config: Value,
    pub outcome: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub result: Value,
}

pub fn outcome(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_INVALID => "validation-failed",
        EXIT_NOT_CONVERGED => "not-converged",
        _ => "error",
    }
}

impl Report {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `path = value` lines; long arrays of records are summarized.
    pub fn text(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        flatten(&mut out, "", &value);
        out
    }
}

fn flatten(out: &mut String, prefix: &str, v: &Value) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(out, &key(k), x);
            }
        }
        Value::Array(items) if items.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let parts: Vec<String> = items.iter().map(scalar).collect();
            let _ = writeln!(out, "{prefix} = [{}]", parts.join(", "));
        }
        Value::Array(items) if items.len() > 8 => {
            let _ = writeln!(out, "{prefix} = [{} entries]", items.len());
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(out, &key(&i.to_string()), x);
            }
        }
        _ => {
            let _ = writeln!(out, "{prefix} = {}", scalar(v));
        }
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "none".into(),
        other => other.to_string(),
    }
}
