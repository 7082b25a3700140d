//! Signals CSV: one signal per column, one sample per row, optional header line.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Largest accepted sample count per file.
pub const MAX_VALUES: usize = 1 << 26;

/// Parsed columns and the header names, if present.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTable {
    pub names: Option<Vec<String>>,
    pub signals: Vec<Vec<f64>>,
}

fn bad<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Csv {
        line,
        message: message.into(),
    })
}

pub fn parse_signals_csv(text: &str) -> Result<SignalTable> {
    let mut names = None;
    let mut signals: Vec<Vec<f64>> = Vec::new();
    let mut seen_data = false;
    let mut total = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if !seen_data && names.is_none() && parsed.iter().any(Option::is_none) {
            names = Some(fields.iter().map(|s| s.to_string()).collect::<Vec<_>>());
            signals = vec![Vec::new(); fields.len()];
            continue;
        }
        if !seen_data && names.is_none() {
            signals = vec![Vec::new(); fields.len()];
        }
        seen_data = true;
        if fields.len() != signals.len() {
            return bad(line, format!("{} fields, expected {}", fields.len(), signals.len()));
        }
        total += fields.len();
        if total > MAX_VALUES {
            return bad(line, format!("more than {MAX_VALUES} values"));
        }
        for (col, (v, f)) in parsed.into_iter().zip(&fields).enumerate() {
            match v {
                Some(v) if v.is_finite() => signals[col].push(v),
                _ => return bad(line, format!("column {}: '{f}' is not a finite number", col + 1)),
            }
        }
    }
    if !seen_data {
        return bad(text.lines().count().max(1), "no data rows");
    }
    Ok(SignalTable { names, signals })
}

/// Writes `signals` as columns with a `s0,s1,...` header.
pub fn write_signals_csv(signals: &[Vec<f64>]) -> Result<String> {
    let n = signals.first().map_or(0, Vec::len);
    if signals.iter().any(|s| s.len() != n) {
        return Err(Error::Mismatch("signals of unequal length".into()));
    }
    let header: Vec<String> = (0..signals.len()).map(|k| format!("s{k}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..n {
        for (k, s) in signals.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", s[i]);
        }
        out.push('\n');
    }
    Ok(out)
}
