//! Packaged experiment configs, one per reproduced figure.
//!
//! The recipes are plain TOML files shipped with the crate; `mmimo recipe <name>`
//! runs one, optionally with `--set` overrides on top.

use super::config::ExperimentConfig;
use crate::error::Result;

const SOURCES: [(&str, &str); 6] = [
    ("snr-training", include_str!("../../recipes/snr-training.toml")),
    ("outage-training", include_str!("../../recipes/outage-training.toml")),
    ("tdm-vs-sdm", include_str!("../../recipes/tdm-vs-sdm.toml")),
    ("fdd-ns-sweep", include_str!("../../recipes/fdd-ns-sweep.toml")),
    ("latency-reliability", include_str!("../../recipes/latency-reliability.toml")),
    ("ra-crowded", include_str!("../../recipes/ra-crowded.toml")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub name: &'static str,
    /// First comment line of the recipe file.
    pub summary: String,
    pub source: &'static str,
    pub config: ExperimentConfig,
}

fn load(name: &'static str, source: &'static str) -> Result<Recipe> {
    let summary = source
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .unwrap_or_default()
        .to_string();
    Ok(Recipe {
        name,
        summary,
        source,
        config: ExperimentConfig::from_toml_str(source)?,
    })
}

pub fn recipes() -> Vec<Recipe> {
    SOURCES
        .iter()
        .map(|&(name, src)| load(name, src).expect("packaged recipes parse"))
        .collect()
}

pub fn recipe(name: &str) -> Option<Recipe> {
    SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(n, src)| load(n, src).expect("packaged recipes parse"))
}

pub fn recipe_names() -> Vec<&'static str> {
    SOURCES.iter().map(|(n, _)| *n).collect()
}
