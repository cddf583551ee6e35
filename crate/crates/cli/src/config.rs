//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the long
//! flag names with `-` or `_` (`max-iters` and `max_iters` are the same key).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    source: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("{source}:{}: expected `key = value`, got `{line}`", i + 1)));
            };
            let key = key.trim().replace('-', "_");
            if key.is_empty() {
                return Err(CliError::Usage(format!("{source}:{}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(CliError::Usage(format!("{source}:{}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(ConfigFile { source: source.to_string(), entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Typed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, value)) => value.parse().map(Some).map_err(|e| {
                CliError::Usage(format!("{}:{line}: config key `{key}`: cannot parse `{value}`: {e}", self.source))
            }),
        }
    }

    /// Fails on keys outside `known`, naming the offending key.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        for (key, (line, _)) in &self.entries {
            if !known.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}:{line}: unknown config key `{key}` (known: {})",
                    self.source,
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// CLI value, then config file, then default.
pub fn resolve<T: FromStr>(cli: Option<T>, config: &ConfigFile, key: &str, default: T) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    match cli {
        Some(v) => Ok(v),
        None => Ok(config.get(key)?.unwrap_or(default)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let cfg = ConfigFile::parse("# comment\nseed = 7\nmax-iters=50\n\nsigma_px = 1.5\n", "c.cfg").unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.get::<usize>("max_iters").unwrap(), Some(50));
        assert_eq!(resolve(Some(3u64), &cfg, "seed", 0).unwrap(), 3);
        assert_eq!(resolve(None, &cfg, "seed", 0u64).unwrap(), 7);
        assert_eq!(resolve(None, &cfg, "n", 10usize).unwrap(), 10);
        assert!(cfg.check_keys(&["seed", "max_iters", "sigma_px"]).is_ok());
    }

    #[test]
    fn errors_name_the_field() {
        let cfg = ConfigFile::parse("seed = seven\n", "c.cfg").unwrap();
        let err = cfg.get::<u64>("seed").unwrap_err().to_string();
        assert!(err.contains("c.cfg:1") && err.contains("seed"), "{err}");
        let err = ConfigFile::parse("a = 1\nbogus = 2\n", "c.cfg").unwrap().check_keys(&["a"]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        assert!(ConfigFile::parse("novalue\n", "c.cfg").is_err());
        assert!(ConfigFile::parse("a = 1\na = 2\n", "c.cfg").is_err());
    }
}
