//! Flat `key = value` text files shared by run configs and scenario specs.
//!
//! Blank lines and everything after `#` are ignored. Keys may repeat; the
//! caller decides whether a repeat overrides or accumulates.

use crate::error::{Error, Result};

/// `(line number, key, value)` triples in file order.
pub fn key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(Error::Config {
            line: line_no,
            message: format!("expected 'key = value', got '{content}'"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config {
                line: line_no,
                message: "empty key".into(),
            });
        }
        out.push((line_no, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}
