//! JSON envelopes with a schema version and fixed-precision floats.

use serde::Serialize;
use serde_json::{json, Map, Number, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// Significant digits kept for every float in a report.
pub const FLOAT_DIGITS: usize = 12;

fn round_float(x: f64) -> Value {
    if !x.is_finite() {
        return Value::String(if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() });
    }
    let s = format!("{:.*e}", FLOAT_DIGITS - 1, x);
    let r: f64 = s.parse().unwrap_or(x);
    // Normalize negative zero.
    let r = if r == 0.0 { 0.0 } else { r };
    Number::from_f64(r).map_or(Value::Null, Value::Number)
}

/// Rounds every float in `v` to [`FLOAT_DIGITS`] significant digits.
pub fn fix_precision(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => round_float(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(items) => Value::Array(items.into_iter().map(fix_precision).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, fix_precision(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

/// `{schema_version, command, scenario, seed, result}` as pretty JSON.
pub fn envelope<T: Serialize>(command: &str, scenario: &str, seed: u64, result: &T) -> String {
    let body = serde_json::to_value(result).unwrap_or_else(|e| json!({ "serialization_error": e.to_string() }));
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "scenario": scenario,
        "seed": seed,
        "result": fix_precision(body),
    });
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub expected: Vec<String>,
}

pub fn error_json(command: &str, err: &ErrorBody) -> String {
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "error": err,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn floats_are_rounded() {
        let v = fix_precision(json!({ "a": [0.1 + 0.2, -0.0, std::f64::consts::PI] }));
        assert_eq!(v["a"][0], json!(0.3));
        assert_eq!(v["a"][1], json!(0.0));
        assert_eq!(v["a"][2], json!(3.14159265359));
        assert_eq!(round_float(f64::INFINITY), json!("inf"));
    }
}
