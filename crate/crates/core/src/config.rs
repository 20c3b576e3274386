//! Flat `key = value` text configuration. Blank lines and lines starting
//! with `#` are skipped.

use std::fmt::Display;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Io(String),
}

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_kv(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            text: line.to_string(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                text: line.to_string(),
            });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(ConfigError::Duplicate {
                line: idx + 1,
                key: key.to_string(),
            });
        }
        out.push(Entry {
            line: idx + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn read_kv(path: &std::path::Path) -> Result<Vec<Entry>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_kv(&text)
}

/// Parses `value` for `key`, reporting the parser's message on failure.
pub fn value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("`{value}`: {e}"),
    })
}

/// Something configurable from `key = value` entries.
pub trait Settings {
    /// Applies one entry; `Ok(false)` means the key is not ours.
    fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError>;

    /// Current values as `key = value` lines, one per field.
    fn entries(&self) -> Vec<(&'static str, String)>;
}

/// Applies `entries` to each target in turn; every key must be claimed.
pub fn apply(entries: &[Entry], targets: &mut [&mut dyn Settings]) -> Result<(), ConfigError> {
    'outer: for e in entries {
        for t in targets.iter_mut() {
            if t.set(&e.key, &e.value)? {
                continue 'outer;
            }
        }
        return Err(ConfigError::UnknownKey(e.key.clone()));
    }
    Ok(())
}

pub fn render(settings: &[&dyn Settings]) -> String {
    let mut out = String::new();
    for s in settings {
        for (k, v) in s.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let e = parse_kv("# comment\n a = 1 \n\nb=x y\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[1].key.as_str(), e[1].value.as_str(), e[1].line), ("b", "x y", 4));
        assert!(matches!(parse_kv("a 1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_kv("a=1\na=2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(parse_kv("=2"), Err(ConfigError::Syntax { .. })));
        assert_eq!(value::<usize>("k", "12").unwrap(), 12);
        assert!(value::<usize>("k", "-1").is_err());
    }
}
