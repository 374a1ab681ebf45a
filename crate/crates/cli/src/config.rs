use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::UsageError;

/// Default for one configuration key.
#[derive(Debug, Clone)]
pub enum Def {
    /// Must be set by file or flag.
    Required,
    /// May stay unset (an empty value also means unset).
    Optional,
    Value(String),
}

pub fn val(v: impl ToString) -> Def {
    Def::Value(v.to_string())
}

/// Flat `key = value` configuration resolved from defaults, an optional
/// file, and flag overrides, in that order.
#[derive(Debug, Clone)]
pub struct RunConfig {
    entries: Vec<(String, Option<String>)>,
}

impl RunConfig {
    pub fn resolve(
        schema: &[(String, Def)],
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut entries: Vec<(String, Option<String>)> = schema
            .iter()
            .map(|(k, d)| (k.clone(), if let Def::Value(v) = d { Some(v.clone()) } else { None }))
            .collect();
        let mut set = |key: &str, value: &str, origin: &str| -> Result<()> {
            let slot = entries
                .iter_mut()
                .find(|(k, _)| k == key)
                .ok_or_else(|| UsageError(format!("unknown config key {key:?} ({origin})")))?;
            let value = value.trim();
            slot.1 = (!value.is_empty()).then(|| value.to_string());
            Ok(())
        };

        if let Some(path) = file {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    UsageError(format!("{}:{}: expected key = value", path.display(), n + 1))
                })?;
                set(k.trim(), v, &format!("{}:{}", path.display(), n + 1))?;
            }
        }
        for (k, v) in overrides {
            set(k, v, "command line")?;
        }

        for ((k, v), (_, d)) in entries.iter().zip(schema) {
            if v.is_none() && matches!(d, Def::Required) {
                return Err(UsageError(format!("missing required setting {k:?}")).into());
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).and_then(|(_, v)| v.as_deref())
    }

    pub fn req(&self, key: &str) -> Result<&str> {
        Ok(self.get(key).ok_or_else(|| UsageError(format!("missing required setting {key:?}")))?)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.req(key)?;
        Ok(raw.parse().map_err(|_| UsageError(format!("invalid value {raw:?} for {key}")))?)
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.parse(key).map(Some),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Option<&str>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_deref()))
    }

    /// The resolved configuration in the file format it is read from.
    pub fn echo(&self, command: &str) -> String {
        let mut s = format!("# ganser {command}\n");
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {}", v.as_deref().unwrap_or("")).unwrap();
        }
        s
    }
}

/// Splits a `key=value` flag argument.
pub fn parse_override(arg: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = arg.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {arg:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> Vec<(String, Def)> {
        vec![
            ("corpus".into(), Def::Required),
            ("seed".into(), val(0)),
            ("held".into(), Def::Optional),
        ]
    }

    #[test]
    fn flags_override_file_and_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\ncorpus = a.csv\nseed = 3").unwrap();
        let cfg = RunConfig::resolve(&schema(), Some(f.path()), &[("seed".into(), "5".into())]).unwrap();
        assert_eq!(cfg.get("corpus"), Some("a.csv"));
        assert_eq!(cfg.parse::<u64>("seed").unwrap(), 5);
        assert_eq!(cfg.get("held"), None);
    }

    #[test]
    fn unknown_and_missing_keys_are_usage_errors() {
        let err = RunConfig::resolve(&schema(), None, &[("bogus".into(), "1".into())]).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        let err = RunConfig::resolve(&schema(), None, &[]).unwrap_err();
        assert!(err.to_string().contains("corpus"));
    }

    #[test]
    fn echo_reads_back_identically() {
        let cfg = RunConfig::resolve(&schema(), None, &[("corpus".into(), "x.csv".into())]).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(cfg.echo("test").as_bytes()).unwrap();
        let again = RunConfig::resolve(&schema(), Some(f.path()), &[]).unwrap();
        assert_eq!(again.echo("test"), cfg.echo("test"));
    }
}
