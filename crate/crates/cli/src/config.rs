//! Run configuration: a JSON object whose global keys (`seed`, `format`,
//! `threads`, `output_dir`) sit beside the subcommand parameters, either inline
//! or under `config`. A written manifest has the same shape, so it can be fed
//! back with `--config` to repeat a run.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "out";

/// A user mistake in flags, config files or inputs; exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Default)]
pub struct RunFile {
    pub subcommand: Option<String>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub params: Option<Value>,
}

const GLOBAL_KEYS: [&str; 5] = ["subcommand", "seed", "format", "threads", "output_dir"];
/// Manifest fields that describe a finished run and are ignored on input.
const RESULT_KEYS: [&str; 2] = ["artifacts", "summary"];

fn field<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str) -> anyhow::Result<Option<T>> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v).map(Some).map_err(|e| config_error(format!("config key {key:?}: {e}"))),
    }
}

impl RunFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e.downcast::<ConfigError>() {
            Ok(c) => config_error(format!("{}: {c}", path.display())),
            Err(e) => e,
        })
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| config_error(format!("invalid JSON: {e}")))?;
        let Value::Object(mut map) = value else {
            return Err(config_error("config must be a JSON object"));
        };
        let mut rf = RunFile {
            subcommand: field(&mut map, GLOBAL_KEYS[0])?,
            seed: field(&mut map, GLOBAL_KEYS[1])?,
            format: field(&mut map, GLOBAL_KEYS[2])?,
            threads: field(&mut map, GLOBAL_KEYS[3])?,
            output_dir: field(&mut map, GLOBAL_KEYS[4])?,
            params: None,
        };
        for k in RESULT_KEYS {
            map.remove(k);
        }
        match map.remove("config") {
            Some(nested) => {
                if let Some(k) = map.keys().next() {
                    return Err(config_error(format!("unknown key {k:?} beside \"config\"")));
                }
                rf.params = Some(nested);
            }
            None if !map.is_empty() => rf.params = Some(Value::Object(map)),
            None => {}
        }
        Ok(rf)
    }

    /// Subcommand parameters from the file, or their defaults; unknown keys are rejected.
    pub fn params<P: DeserializeOwned + Default>(&self) -> anyhow::Result<P> {
        match &self.params {
            None => Ok(P::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| config_error(format!("parameters: {e}"))),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub seed: u64,
    pub format: Format,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub config: Value,
    pub artifacts: Vec<String>,
    pub summary: Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, PartialEq, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct P {
        a: f64,
    }

    #[test]
    fn inline_and_nested_parameters() {
        let rf = RunFile::parse(r#"{"seed": 4, "a": 2.5}"#).unwrap();
        assert_eq!(rf.seed, Some(4));
        assert_eq!(rf.params::<P>().unwrap(), P { a: 2.5 });
        let rf = RunFile::parse(r#"{"subcommand": "x", "config": {"a": 1.0}, "artifacts": [], "summary": {}}"#).unwrap();
        assert_eq!(rf.params::<P>().unwrap(), P { a: 1.0 });
        assert_eq!(RunFile::parse("{}").unwrap().params::<P>().unwrap(), P::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunFile::parse(r#"{"b": 1}"#).unwrap().params::<P>().is_err());
        assert!(RunFile::parse(r#"{"config": {"a": 1}, "b": 2}"#).is_err());
        assert!(RunFile::parse(r#"{"format": "xml"}"#).is_err());
        assert!(RunFile::parse("[1]").is_err());
    }
}
