//! JSON run configuration, command-line overrides and site inputs.

use std::fs;
use std::path::{Path, PathBuf};

use driftnet_core::schemes::SchemeKind;
use driftnet_core::sim::{SiteData, SiteInput, SiteSource};
use driftnet_core::{SimConfig, SimError};
use serde::{Deserialize, Serialize};

use crate::io_util::read_probabilities;
use crate::CliError;

/// Command-line values that replace fields of the loaded configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub schemes: Option<Vec<SchemeKind>>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut SimConfig) {
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(replicates) = self.replicates {
            config.replicates = replicates;
        }
        if let Some(schemes) = &self.schemes {
            config.schemes = schemes.clone();
        }
    }
}

/// Parses a comma-separated scheme list such as `siteref,centralized`.
pub fn parse_schemes(list: &str) -> Result<Vec<SchemeKind>, String> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Loads a configuration file, or the `config` section of a run manifest,
/// and validates it. Relative CSV paths are resolved against the file's
/// directory.
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        field: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let (value, prefix) = match value {
        serde_json::Value::Object(mut map)
            if map.contains_key("tool") && map.contains_key("config") =>
        {
            (map.remove("config").unwrap_or_default(), "config.")
        }
        other => (other, ""),
    };
    let mut config: SimConfig =
        serde_path_to_error::deserialize(value).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            field: format!("{prefix}{}", e.path()),
            message: e.inner().to_string(),
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for site in &mut config.sites {
        if let SiteSource::Csv { reference, test } = &mut site.source {
            *reference = resolve(base, reference);
            *test = resolve(base, test);
        }
    }
    validate(&config, path)?;
    Ok(config)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Validates a configuration, attributing errors to `source`.
pub fn validate(config: &SimConfig, source: &Path) -> Result<(), CliError> {
    config.validate().map_err(|e| match e {
        SimError::Config { path, message } => CliError::Config {
            path: source.to_path_buf(),
            field: path,
            message,
        },
        other => CliError::Sim(other),
    })
}

/// Site inputs of a run; CSV-backed sites are read once here.
pub fn site_inputs(config: &SimConfig) -> Result<Vec<SiteInput>, CliError> {
    config
        .sites
        .iter()
        .map(|site| match &site.source {
            SiteSource::Synthetic(spec) => Ok(SiteInput::Synthetic {
                id: site.id.clone(),
                spec: spec.clone(),
            }),
            SiteSource::Csv { reference, test } => Ok(SiteInput::Fixed(SiteData {
                id: site.id.clone(),
                reference: read_probabilities(reference)?,
                test: read_probabilities(test)?,
            })),
        })
        .collect()
}
