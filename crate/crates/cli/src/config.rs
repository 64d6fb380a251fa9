//! Plain `key=value` configuration files.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. Keys
//! use the long flag names without dashes (`s0`, `strike`, `reps`, ...).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "sampler",
    "samplers",
    "n",
    "N",
    "reps",
    "seed",
    "steps",
    "s0",
    "strike",
    "rate",
    "sigma",
    "maturity",
    "schedule",
    "experiment",
    "jobs",
    "dim",
    "domain",
    "asian_rate",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Usage(format!("config: bad value `{v}` for `{key}`")))
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let cfg = ConfigFile::parse("# defaults\n\ns0 = 100\nstrike=90 # K\nreps=20\n").unwrap();
        assert_eq!(cfg.get::<f64>("s0").unwrap(), Some(100.0));
        assert_eq!(cfg.get::<f64>("strike").unwrap(), Some(90.0));
        assert_eq!(cfg.get::<usize>("reps").unwrap(), Some(20));
        assert_eq!(cfg.get::<usize>("steps").unwrap(), None);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            ConfigFile::parse("s0 100"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            ConfigFile::parse("volatility=0.2"),
            Err(CliError::Usage(_))
        ));
        let cfg = ConfigFile::parse("reps=many").unwrap();
        assert!(cfg.get::<usize>("reps").is_err());
    }
}
