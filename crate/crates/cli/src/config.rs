//! `key = value` run configuration files. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Parsed `key = value` lines. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    source: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str, source: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{source}:{line_no}: expected `key = value`, got `{line}`")))?;
            let key = key.trim().replace('_', "-");
            if key.is_empty() {
                return Err(CliError::Usage(format!("{source}:{line_no}: empty key")));
            }
            if entries.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
                return Err(CliError::Usage(format!("{source}:{line_no}: duplicate key `{key}`")));
            }
        }
        Ok(Self { source: source.to_string(), entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Rejects keys outside `allowed`, so typos are not silently ignored.
    pub fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{}:{line}: unknown key `{key}`", self.source)));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// The flag value if given, otherwise the parsed file value, otherwise `None`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, value)) => value
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("{}:{line}: bad value for `{key}`: {e}", self.source))),
        }
    }

    pub fn resolve_or<T>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.resolve(flag, key)?.unwrap_or(default))
    }
}

/// Either one bucket count for every field or a comma list with one per field.
pub fn parse_buckets(spec: &str, num_categorical: usize) -> CliResult<Vec<usize>> {
    let values = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Usage(format!("bad bucket count `{}`: {e}", s.trim())))
        })
        .collect::<CliResult<Vec<_>>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; num_categorical]),
        n if n == num_categorical => Ok(values),
        n => Err(CliError::Usage(format!(
            "--buckets lists {n} values but the schema has {num_categorical} categorical fields"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_with_flag_precedence() {
        let cfg = ConfigFile::parse("# run\nlr = 0.01\nepochs=3  # short\n\nbatch_size = 64\n", "run.cfg").unwrap();
        assert_eq!(cfg.resolve::<f64>(None, "lr").unwrap(), Some(0.01));
        assert_eq!(cfg.resolve(Some(0.5f64), "lr").unwrap(), Some(0.5));
        assert_eq!(cfg.resolve_or::<usize>(None, "epochs", 10).unwrap(), 3);
        assert_eq!(cfg.get("batch-size"), Some("64"));
        assert_eq!(cfg.resolve::<usize>(None, "seed").unwrap(), None);
    }

    #[test]
    fn rejects_bad_lines_and_keys() {
        assert!(ConfigFile::parse("lr 0.1", "c").is_err());
        assert!(ConfigFile::parse("lr = 1\nlr = 2", "c").is_err());
        let cfg = ConfigFile::parse("lrr = 1", "c").unwrap();
        let err = cfg.check_keys(&["lr"]).unwrap_err();
        assert!(err.to_string().contains("lrr"));
        let cfg = ConfigFile::parse("lr = fast", "c").unwrap();
        assert!(cfg.resolve::<f64>(None, "lr").is_err());
    }

    #[test]
    fn bucket_lists() {
        assert_eq!(parse_buckets("7", 3).unwrap(), vec![7, 7, 7]);
        assert_eq!(parse_buckets("2, 3,4", 3).unwrap(), vec![2, 3, 4]);
        assert!(parse_buckets("2,3", 3).is_err());
        assert!(parse_buckets("x", 3).is_err());
    }
}
