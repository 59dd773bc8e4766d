//! Flat `key = value` text documents with `#` comments. Used for run
//! configs, audit reports and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key-value document. Later duplicates overwrite earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
    source: Option<PathBuf>,
    lines: BTreeMap<String, usize>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self> {
        let mut doc = KvDoc {
            source: source.map(Path::to_path_buf),
            ..Default::default()
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(doc.error(i + 1, format!("expected 'key = value', found '{line}'")));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(doc.error(i + 1, "empty key".into()));
            }
            doc.lines.insert(key.to_string(), i + 1);
            doc.set(key, v.trim());
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, Some(path))
    }

    fn error(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self
                .source
                .clone()
                .unwrap_or_else(|| PathBuf::from("<text>")),
            line,
            message,
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Parse an optional typed value.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                let line = self.lines.get(key).copied().unwrap_or(0);
                self.error(line, format!("bad value '{v}' for '{key}': {e}"))
            }),
        }
    }

    /// Parse a mandatory typed value.
    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| self.error(0, format!("missing key '{key}'")))
    }

    pub fn to_text(&self, title: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(t) = title {
            let _ = writeln!(out, "# {t}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let doc = KvDoc::parse("# hi\n a = 1 \n\nb=two words\n", None).unwrap();
        assert_eq!(doc.get("a"), Some("1"));
        assert_eq!(doc.get("b"), Some("two words"));
        assert_eq!(doc.require::<u32>("a").unwrap(), 1);
    }

    #[test]
    fn reports_line_numbers() {
        let err = KvDoc::parse("a = 1\nnonsense\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let doc = KvDoc::parse("a = 1\nb = x\n", None).unwrap();
        let err = doc.require::<f64>("b").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn text_roundtrip() {
        let mut doc = KvDoc::new();
        doc.set("x", 0.1);
        doc.set("y", "z");
        doc.set("x", 0.25);
        let back = KvDoc::parse(&doc.to_text(Some("t")), None).unwrap();
        assert_eq!(back.get("x"), Some("0.25"));
        assert_eq!(back.keys().collect::<Vec<_>>(), vec!["x", "y"]);
    }
}
