//! Keyed text format: `key=value` pairs, tab-separated on one line for
//! per-record emission, or one pair per line for summary files.
//!
//! Values are escaped so any Unicode string round-trips, including tabs
//! and newlines.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Escape a value for embedding in a keyed line.
pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

pub fn unescape(value: &str) -> Result<String> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "bad escape `\\{}` in keyed value",
                    other.map(String::from).unwrap_or_default()
                )))
            }
        }
    }
    Ok(out)
}

/// Render one record as a single tab-separated `key=value` line.
pub fn record_line(pairs: &[(&str, String)]) -> String {
    let mut parts = Vec::with_capacity(pairs.len());
    for (key, value) in pairs {
        parts.push(format!("{key}={}", escape(value)));
    }
    parts.join("\t")
}

/// Parse one record line into ordered pairs.
pub fn parse_record_line(line: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for field in line.split('\t') {
        let (key, raw) = field.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("keyed field `{field}` has no `=`"))
        })?;
        pairs.push((key.to_string(), unescape(raw)?));
    }
    Ok(pairs)
}

/// Write a summary file: one `key=value` pair per line, in the given order.
pub fn write_summary<W: Write>(mut w: W, pairs: &[(&str, String)]) -> Result<()> {
    for (key, value) in pairs {
        writeln!(w, "{key}={}", escape(value))?;
    }
    Ok(())
}

/// Read a summary file back into a map. Blank lines and `#` comments are skipped.
pub fn read_summary(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, raw) = trimmed.split_once('=').ok_or_else(|| Error::KeyedFormat {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `key=value`".into(),
        })?;
        map.insert(key.to_string(), unescape(raw)?);
    }
    Ok(map)
}

/// Fetch a required key from a summary map, with the file path for diagnostics.
pub fn require<'a>(
    map: &'a BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<&'a str> {
    map.get(key).map(String::as_str).ok_or_else(|| {
        Error::Integrity(format!("{} is missing key `{key}`", path.display()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_round_trip() {
        let cases = ["plain", "tab\there", "line\nbreak", "back\\slash", "末尾\r"];
        for case in cases {
            assert_eq!(unescape(&escape(case)).unwrap(), case);
        }
    }

    #[test]
    fn record_line_round_trips() {
        let pairs = [("id", "7".to_string()), ("text", "a\tb".to_string())];
        let line = record_line(&pairs);
        assert!(!line.contains('\n'));
        let parsed = parse_record_line(&line).unwrap();
        assert_eq!(parsed[0], ("id".to_string(), "7".to_string()));
        assert_eq!(parsed[1], ("text".to_string(), "a\tb".to_string()));
    }

    #[test]
    fn rejects_bad_escape() {
        assert!(unescape("\\q").is_err());
        assert!(unescape("trailing\\").is_err());
    }
}
