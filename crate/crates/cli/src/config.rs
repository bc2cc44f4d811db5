//! Flat `key = value` configuration files and CLI/config merging.
//!
//! Format: one `key = value` pair per line, `#` starts a comment, and
//! `[section]` lines are allowed for visual grouping but carry no meaning.
//! Keys are case-insensitive and `-`/`_` are interchangeable; when a key
//! appears twice the later line wins.  Command-line flags always override
//! the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::CliError;

#[derive(Debug, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigMap {
    pub fn empty() -> Self {
        ConfigMap::default()
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", idx + 1))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(format!("line {}: empty key", idx + 1));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }
}

/// The CLI value if given, else the config entry for `key` parsed as `T`.
pub fn merge<T>(cli: Option<T>, cfg: &ConfigMap, key: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    if cli.is_some() {
        return Ok(cli);
    }
    match cfg.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse().map(Some).map_err(|e| {
            CliError::Usage(format!("config key `{key}`: cannot parse {raw:?}: {e}"))
        }),
    }
}

/// Boolean switch: set on the command line, or `true`/`false` in the file.
pub fn merge_flag(cli: bool, cfg: &ConfigMap, key: &str) -> Result<bool, CliError> {
    if cli {
        return Ok(true);
    }
    match cfg.get(key) {
        None => Ok(false),
        Some("true") | Some("yes") | Some("1") => Ok(true),
        Some("false") | Some("no") | Some("0") => Ok(false),
        Some(other) => Err(CliError::Usage(format!(
            "config key `{key}`: expected a boolean, got {other:?}"
        ))),
    }
}

/// Reject a still-missing value after the merge, naming the option.
pub fn require<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Usage(format!(
            "missing required option --{key} (or `{key}` in the config file)"
        ))
    })
}

/// Parse an optional rational argument, falling back to `default`.
pub fn rational_or(
    value: Option<String>,
    default: (i64, i64),
    what: &str,
) -> Result<BigRational, CliError> {
    match value {
        None => Ok(BigRational::new(
            BigInt::from(default.0),
            BigInt::from(default.1),
        )),
        Some(s) => capital_core::dist::parse_rational(&s)
            .map_err(|e| CliError::Usage(format!("{what}: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments_are_cosmetic() {
        let cfg = ConfigMap::parse(
            "# run defaults\n[run]\nseed = 7   # master seed\n\n[output]\nout = results\n",
        )
        .unwrap();
        assert_eq!(cfg.get("seed"), Some("7"));
        assert_eq!(cfg.get("out"), Some("results"));
    }

    #[test]
    fn later_lines_and_key_aliases_win() {
        let cfg = ConfigMap::parse("mc_n = 10\nMC-N = 20\n").unwrap();
        assert_eq!(cfg.get("mc-n"), Some("20"));
        assert_eq!(cfg.get("mc_n"), Some("20"));
    }

    #[test]
    fn cli_beats_config_in_merge() {
        let cfg = ConfigMap::parse("steps = 5\n").unwrap();
        assert_eq!(merge(Some(9u64), &cfg, "steps").unwrap(), Some(9));
        assert_eq!(merge(None::<u64>, &cfg, "steps").unwrap(), Some(5));
        assert_eq!(merge(None::<u64>, &cfg, "absent").unwrap(), None);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(ConfigMap::parse("just words\n").is_err());
        let cfg = ConfigMap::parse("steps = many\n").unwrap();
        assert!(merge(None::<u64>, &cfg, "steps").is_err());
        assert!(merge_flag(false, &ConfigMap::parse("train = maybe\n").unwrap(), "train").is_err());
    }
}
