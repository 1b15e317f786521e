//! Stable JSON and CSV output.
//!
//! Floats are rounded to 12 significant digits so reports are byte-stable
//! across platforms; non-finite floats become `null`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

pub fn to_value<T: Serialize + ?Sized>(v: &T) -> Result<Value> {
    Ok(round_value(serde_json::to_value(v)?))
}

pub fn to_json_string<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&to_value(v)?)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, v: &T) -> Result<()> {
    std::fs::write(path, to_json_string(v)?)?;
    Ok(())
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, &to_value(r)?)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with a header row; the header is written even without rows.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Float cell text; empty for missing values.
pub fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => round_sig(v).to_string(),
        _ => String::new(),
    }
}
