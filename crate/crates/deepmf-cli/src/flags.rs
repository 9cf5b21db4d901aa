//! Minimal flag parser: `--key value` pairs plus boolean switches, with
//! typed accessors and comma-separated list parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::cli_error::{CliError, CliResult};

pub struct Flags {
    values: BTreeMap<String, String>,
    switches: BTreeSet<String>,
}

impl Flags {
    pub fn parse(args: &[String], value_keys: &[&str], switch_keys: &[&str]) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        let mut switches = BTreeSet::new();
        let mut it = args.iter().peekable();
        while let Some(arg) = it.next() {
            let Some(key) = arg.strip_prefix("--") else {
                return Err(CliError::config(format!(
                    "unexpected argument '{arg}' (flags start with --)"
                )));
            };
            if switch_keys.contains(&key) {
                switches.insert(key.to_string());
            } else if value_keys.contains(&key) {
                let value = it.next().ok_or_else(|| {
                    CliError::config(format!("flag --{key} needs a value"))
                })?;
                values.insert(key.to_string(), value.clone());
            } else {
                return Err(CliError::config(format!("unknown flag --{key}")));
            }
        }
        Ok(Self { values, switches })
    }

    pub fn switch(&self, key: &str) -> bool {
        self.switches.contains(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| CliError::config(format!("cannot parse --{key} value '{raw}'"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T> {
        self.get(key)?
            .ok_or_else(|| CliError::config(format!("missing required flag --{key}")))
    }

    /// Comma-separated list value.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|part| {
                    part.trim().parse().map_err(|_| {
                        CliError::config(format!("cannot parse '{part}' in --{key} value '{raw}'"))
                    })
                })
                .collect::<CliResult<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn string_list(&self, key: &str) -> Option<Vec<String>> {
        self.values
            .get(key)
            .map(|raw| raw.split(',').map(|s| s.trim().to_string()).collect())
    }
}
