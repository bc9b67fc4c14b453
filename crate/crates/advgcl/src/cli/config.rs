//! Plain-text run configuration: `key = value` lines grouped by optional
//! `[section]` headers, `#` comments. Every key must be consumed by the
//! command that loads the file; leftovers are reported as unknown keys so
//! typos in hyperparameter names fail loudly instead of silently using a
//! default.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Parsed but not yet interpreted configuration.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

pub fn parse_config(text: &str) -> Result<RawConfig> {
    let mut entries = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("unterminated section header {line:?}"),
            })?;
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("invalid section name {name:?}"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::Parse { line: line_no, msg: format!("invalid key {key:?}") });
        }
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        let value = value.trim().to_string();
        if entries.insert(full.clone(), (value, line_no)).is_some() {
            return Err(Error::Parse { line: line_no, msg: format!("duplicate key {full:?}") });
        }
    }
    Ok(RawConfig { entries })
}

pub fn load_config(path: &Path) -> Result<RawConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl RawConfig {
    /// Removes and returns a key, so [`RawConfig::finish`] can flag typos.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    pub fn take_str(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_string())
    }

    pub fn require(&mut self, key: &str) -> Result<String> {
        self.take(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: expected a real, got {v:?}"))),
        }
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: expected an integer, got {v:?}"))),
        }
    }

    pub fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: expected an integer, got {v:?}"))),
        }
    }

    /// Comma-separated positive integers.
    pub fn take_usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|tok| {
                    tok.trim().parse().map_err(|_| {
                        Error::Config(format!("key `{key}`: expected integers, got {tok:?}"))
                    })
                })
                .collect::<Result<Vec<usize>>>()
                .map(Some),
        }
    }

    /// Errors when any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(Error::Config(format!("unknown key `{key}` (line {line})")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let mut cfg = parse_config("mode = node\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(cfg.take("mode").unwrap(), "node");
        assert_eq!(cfg.take_usize("train.epochs", 0).unwrap(), 5);
        cfg.finish().unwrap();
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let mut cfg = parse_config("# a comment\n\nseed = 7\n").unwrap();
        assert_eq!(cfg.take_u64("seed", 0).unwrap(), 7);
        cfg.finish().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = parse_config("[train]\nepohcs = 5\n").unwrap();
        let err = cfg.finish().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("train.epohcs"));
    }

    #[test]
    fn duplicate_keys_are_parse_errors() {
        assert!(matches!(
            parse_config("a = 1\na = 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_lines_report_position() {
        assert!(matches!(
            parse_config("mode node\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("[train\nx = 1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn typed_getters_validate() {
        let mut cfg = parse_config("lr = fast\n").unwrap();
        assert!(matches!(cfg.take_f64("lr", 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn list_values_parse() {
        let mut cfg = parse_config("blocks = 50, 50\n").unwrap();
        assert_eq!(cfg.take_usize_list("blocks").unwrap(), Some(vec![50, 50]));
    }

    #[test]
    fn defaults_apply_when_missing() {
        let mut cfg = parse_config("").unwrap();
        assert_eq!(cfg.take_f64("x", 2.5).unwrap(), 2.5);
        assert_eq!(cfg.take_usize("y", 4).unwrap(), 4);
        assert_eq!(cfg.take_str("z", "d"), "d");
        cfg.finish().unwrap();
    }
}
