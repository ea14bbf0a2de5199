//! Optional TOML configuration. Every key is optional; flags win.
//!
//! ```toml
//! seed = 7
//!
//! [synth]
//! users = 56
//! days = 31
//!
//! [bench]
//! queries = 4000
//! backend = "gold"
//! jobs = 0
//!
//! [agent]
//! max_steps = 8
//! few_shot_k = 20
//!
//! [serve]
//! port = 8080
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use insight_core::agent::AgentConfig;
use insight_core::eval::MatchRule;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub bench: BenchSection,
    pub agent: Option<AgentConfig>,
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub users: Option<usize>,
    pub days: Option<u32>,
    pub generator: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub queries: Option<usize>,
    pub users: Option<usize>,
    pub backend: Option<String>,
    pub jobs: Option<usize>,
    pub resamples: Option<usize>,
    pub match_rule: Option<MatchRule>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub data_dir: Option<PathBuf>,
    pub backend: Option<String>,
    pub cors_origin: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<FileConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid configuration in {}", path.display()))
    }
}
