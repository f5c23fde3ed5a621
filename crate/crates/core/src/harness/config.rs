use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{EstcConfig, LinUcbConfig, OtcsConfig};
use crate::error::{Error, Result};
use crate::soids::SoidsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Soids,
    Otcs,
    Estc,
    Linucb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Soids, Algorithm::Otcs, Algorithm::Estc, Algorithm::Linucb];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Soids => "soids",
            Algorithm::Otcs => "otcs",
            Algorithm::Estc => "estc",
            Algorithm::Linucb => "linucb",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub(crate) fn code(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: Vec<usize>,
    /// Actions per instance.
    #[serde(alias = "K")]
    pub num_actions: usize,
    #[serde(alias = "T")]
    pub horizon: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub output_dir: PathBuf,
    /// Concurrent runs; 0 uses every available core.
    pub workers: usize,
    /// Write per-round SOIDS logs as JSON lines.
    pub verbose: bool,
    pub soids: SoidsConfig,
    pub otcs: OtcsConfig,
    pub estc: EstcConfig,
    pub linucb: LinUcbConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: vec![20, 40, 100],
            num_actions: 200,
            horizon: 1000,
            repetitions: 10,
            seed: 2024,
            algorithms: Algorithm::ALL.to_vec(),
            output_dir: PathBuf::from("results"),
            workers: 0,
            verbose: false,
            soids: SoidsConfig::default(),
            otcs: OtcsConfig::default(),
            estc: EstcConfig::default(),
            linucb: LinUcbConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.num_actions == 0 {
            return bad("num_actions must be at least 1");
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims must be a nonempty list of positive integers");
        }
        if self.dims.iter().any(|&d| d >= 1 << 24) || self.repetitions > u32::MAX as usize {
            return bad("dims or repetitions too large for seed derivation");
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected");
        }
        if let Some(t1) = self.estc.exploration_length {
            if t1 == 0 || t1 > self.horizon {
                return bad("estc.exploration_length must lie in 1..=horizon");
            }
        }
        self.soids.validate().map_err(|e| Error::Config(format!("soids: {e}")))?;
        self.otcs.sampler.validate().map_err(|e| Error::Config(format!("otcs: {e}")))?;
        Ok(())
    }

    /// Parses TOML text, applies `key.path=value` overrides and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Sets `a.b.c = value` in `table`, creating intermediate tables. The value is
/// read as a TOML literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{part}' is not a table")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
