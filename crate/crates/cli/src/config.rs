use std::path::{Path, PathBuf};

use quantlab_core::{LabError, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::experiments::ExperimentKind;

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_restarts() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Settings shared by every experiment plus the experiment-specific
/// `[params]` table, which is decoded once the experiment is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must match the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub params: toml::Table,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seeds: default_seeds(),
            restarts: default_restarts(),
            out_dir: default_out(),
            params: toml::Table::new(),
        }
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Typed view of `[params]`; absent keys take the experiment defaults.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e| LabError::Config(format!("params: {e}")))
    }

    /// Checks shared by all experiments.
    pub fn validate_common(&self, kind: ExperimentKind) -> Result<()> {
        if let Some(k) = self.experiment {
            if k != kind {
                return config_err(format!(
                    "config is for `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                ));
            }
        }
        if self.seeds.is_empty() {
            return config_err("seeds must be nonempty");
        }
        if self.restarts == 0 {
            return config_err("restarts must be positive");
        }
        Ok(())
    }
}

pub fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| LabError::Config(e.to_string()))
}

pub fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    parse_table(&text)
}

/// Applies `key.path=value` where `value` is any TOML value; bare words
/// that do not parse are taken as strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let Some((key, raw)) = assignment.split_once('=') else {
        return config_err(format!(
            "override `{assignment}` is not of the form key=value"
        ));
    };
    let value = match parse_table(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return config_err(format!("bad override key `{key}`"));
    }
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return config_err(format!("`{part}` in `{key}` is not a table")),
        };
    }
    node.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("sedes = [1]"),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn overrides_nest_and_parse() {
        let mut t = parse_table("seeds = [1]\n[params]\nn = 4").unwrap();
        apply_override(&mut t, "params.n=8").unwrap();
        apply_override(&mut t, "params.inner.alphas=[0.3, 0.5]").unwrap();
        apply_override(&mut t, "out_dir=results/a").unwrap();
        let c = ExperimentConfig::from_table(t).unwrap();
        assert_eq!(c.params["n"].as_integer(), Some(8));
        assert_eq!(c.params["inner"]["alphas"].as_array().unwrap().len(), 2);
        assert_eq!(c.out_dir, PathBuf::from("results/a"));
        let mut t = toml::Table::new();
        assert!(apply_override(&mut t, "novalue").is_err());
    }

    #[test]
    fn empty_seeds_is_config_error() {
        let c = ExperimentConfig::from_toml("seeds = []").unwrap();
        assert!(matches!(
            c.validate_common(ExperimentKind::HeatProjection),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(
            "experiment = \"example-gap\"\nseeds = [3, 4]\n[params]\nlower_factor = 0.8",
        )
        .unwrap();
        assert_eq!(
            ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(),
            c
        );
    }
}
