//! Per-field statistics over retrieved records.

use chrono::{Datelike, NaiveDate};
use serde_json::{Map, Value};

use crate::HealthError;

/// Slopes smaller than this (per day) are reported as flat.
pub const FLAT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Average,
    Sum,
    Trend,
}

impl Mode {
    pub fn parse(text: &str) -> Result<Self, HealthError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "average" | "mean" => Ok(Mode::Average),
            "sum" | "total" => Ok(Mode::Sum),
            "trend" => Ok(Mode::Trend),
            other => Err(HealthError::UnknownMode(other.to_string())),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Mode::Average => "average",
            Mode::Sum => "sum",
            Mode::Trend => "trend",
        }
    }
}

/// Day offset of a record: `%Y-%m-%d` strings or epoch milliseconds.
fn day_number(v: &Value) -> Option<f64> {
    match v {
        Value::String(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .ok()
            .map(|d| d.num_days_from_ce() as f64),
        Value::Number(n) => n.as_f64().map(|ms| ms / 86_400_000.0),
        _ => None,
    }
}

/// Ordinary least squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn direction(slope: f64) -> &'static str {
    if slope.abs() <= FLAT_EPSILON {
        "flat"
    } else if slope > 0.0 {
        "increasing"
    } else {
        "decreasing"
    }
}

/// Numeric columns in first-seen order with their per-record values.
fn columns(records: &[Map<String, Value>]) -> Vec<(String, Vec<f64>)> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        for (k, v) in r {
            if k != "date" && v.is_number() && !names.contains(k) {
                names.push(k.clone());
            }
        }
    }
    names
        .into_iter()
        .map(|name| {
            let values = records
                .iter()
                .filter_map(|r| r.get(&name).and_then(Value::as_f64))
                .collect();
            (name, values)
        })
        .collect()
}

pub fn analyze(records: &Value, mode: Mode) -> Result<Value, HealthError> {
    let list = records
        .as_array()
        .ok_or_else(|| HealthError::InvalidInput("records must be a list".into()))?;
    let rows: Vec<Map<String, Value>> = list
        .iter()
        .map(|r| {
            r.as_object()
                .cloned()
                .ok_or_else(|| HealthError::InvalidInput("each record must be an object".into()))
        })
        .collect::<Result<_, _>>()?;
    if rows.is_empty() && mode != Mode::Sum {
        return Err(HealthError::EmptyInput);
    }
    let mut out = Map::new();
    out.insert("mode".into(), Value::from(mode.name()));
    out.insert("count".into(), Value::from(rows.len()));
    let cols = columns(&rows);
    match mode {
        Mode::Sum => {
            for (name, values) in cols {
                out.insert(name, Value::from(values.iter().sum::<f64>()));
            }
        }
        Mode::Average => {
            for (name, values) in cols {
                out.insert(name, Value::from(values.iter().sum::<f64>() / values.len() as f64));
            }
        }
        Mode::Trend => {
            let days: Vec<f64> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| r.get("date").and_then(day_number).unwrap_or(i as f64))
                .collect();
            for (name, _) in cols {
                let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .zip(&days)
                    .filter_map(|(r, d)| r.get(&name).and_then(Value::as_f64).map(|y| (*d, y)))
                    .unzip();
                let slope = ls_slope(&xs, &ys);
                let mut entry = Map::new();
                entry.insert("slope".into(), Value::from(slope));
                entry.insert("direction".into(), Value::from(direction(slope)));
                out.insert(name, Value::Object(entry));
            }
        }
    }
    Ok(Value::Object(out))
}
