//! Flat `key = value` configuration with `#` comments and dotted section
//! prefixes, e.g. `sweep.N = 7, 19, 33`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Section prefixes a shared file may carry; keys under the other sections are
/// ignored by each consumer.
pub const SECTIONS: [&str; 3] = ["evolve", "sweep", "compare2"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {line_no}: expected `key = value`, got {line:?}")));
            };
            let key = key.trim();
            if key.is_empty() || key.split('.').any(|p| p.is_empty() || p.contains(char::is_whitespace)) {
                return Err(Error::Config(format!("line {line_no}: malformed key {key:?}")));
            }
            if let Some((prev, _)) = entries.insert(key.to_string(), (line_no, value.trim().to_string())) {
                return Err(Error::Config(format!("line {line_no}: key {key:?} already set on line {prev}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `section.key`, falling back to the bare `key`.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .get(&format!("{section}.{key}"))
            .or_else(|| self.entries.get(key))
            .map(|(_, v)| v.as_str())
    }

    /// Rejects bare or `section.`-prefixed keys outside `allowed`, and keys
    /// with unknown prefixes.
    pub fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            let name = match key.split_once('.') {
                None => key.as_str(),
                Some((prefix, rest)) if prefix == section => rest,
                Some((prefix, _)) if SECTIONS.contains(&prefix) => continue,
                Some((prefix, _)) => {
                    return Err(Error::Config(format!("line {line}: unknown section {prefix:?}")));
                }
            };
            if !allowed.contains(&name) {
                return Err(Error::Config(format!(
                    "line {line}: unknown key {key:?} (expected one of {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("{section}.{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| parse_list(v).map_err(|e| Error::Config(format!("{section}.{key}: {e}"))))
            .transpose()
    }

    pub fn flag(&self, section: &str, key: &str) -> Result<Option<bool>> {
        self.get(section, key)
            .map(|v| match v {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                other => Err(Error::Config(format!("{section}.{key}: expected a boolean, got {other:?}"))),
            })
            .transpose()
    }
}

/// Comma-separated values; empty items are rejected.
pub fn parse_list<T: FromStr>(text: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|item| {
            let item = item.trim();
            if item.is_empty() {
                return Err("empty list item".to_string());
            }
            item.parse::<T>().map_err(|e| format!("{item:?}: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "
# shared settings
dt = 1e-3
sweep.N = 7, 19 ,33   # closed shells
sweep.grid = 24
compare2.grid = 12
exchange = false
";

    #[test]
    fn section_lookup_prefers_prefixed_key() {
        let c = Config::parse(TEXT).unwrap();
        assert_eq!(c.parsed::<usize>("sweep", "grid").unwrap(), Some(24));
        assert_eq!(c.parsed::<usize>("compare2", "grid").unwrap(), Some(12));
        assert_eq!(c.parsed::<f64>("sweep", "dt").unwrap(), Some(1e-3));
        assert_eq!(c.list::<usize>("sweep", "N").unwrap(), Some(vec![7, 19, 33]));
        assert_eq!(c.flag("evolve", "exchange").unwrap(), Some(false));
        assert_eq!(c.get("evolve", "N"), None);
    }

    #[test]
    fn key_checks() {
        let c = Config::parse(TEXT).unwrap();
        c.check_keys("sweep", &["N", "grid", "dt", "exchange"]).unwrap();
        assert!(matches!(c.check_keys("sweep", &["N", "grid"]), Err(Error::Config(_))));
        let bad = Config::parse("sweeep.N = 7").unwrap();
        assert!(matches!(bad.check_keys("sweep", &["N"]), Err(Error::Config(_))));
    }

    #[test]
    fn malformed_input() {
        for text in ["just words", "= 3", "a..b = 1", "a = 1\na = 2"] {
            assert!(matches!(Config::parse(text), Err(Error::Config(_))), "{text:?}");
        }
        let c = Config::parse("sweep.N = 7,,9\ndt = fast\nexchange = maybe").unwrap();
        assert!(c.list::<usize>("sweep", "N").is_err());
        assert!(c.parsed::<f64>("sweep", "dt").is_err());
        assert!(c.flag("sweep", "exchange").is_err());
    }
}
