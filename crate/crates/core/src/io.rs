//! Shared I/O plumbing: full-precision real formatting, comment-aware CSV
//! reading, and key-value config files. The per-module CSV schemas live next
//! to the types they serialize.

use std::path::Path;

use crate::error::{Error, Result};

/// Format a real with 17 significant digits; every finite f64 parses back
/// bit-exactly, which the golden comparisons rely on.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Read a CSV file as (1-based line number, trimmed fields) rows. Blank
/// lines and `#` comments are skipped; numbering follows the file, so error
/// locations stay honest after skipping.
pub fn read_csv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = line.split(',').map(|f| f.trim().to_string()).collect();
        rows.push((idx + 1, fields));
    }
    Ok(rows)
}

/// Read a `key = value` file in insertion order. Blank lines and `#`
/// comments are skipped, duplicate keys rejected.
pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let loc = |line: usize| format!("{}:{}", path.display(), line);
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(loc(idx + 1), "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(loc(idx + 1), "empty key"));
        }
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(Error::parse(
                loc(idx + 1),
                format!("duplicate key `{key}`"),
            ));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
