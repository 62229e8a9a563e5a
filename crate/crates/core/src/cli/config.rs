//! TOML run configuration, merged with command-line flags (flags win).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::blackbox::{ProviderKind, ProviderSpec};
use crate::{Error, Result};

/// Keys accepted in the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub templates: Option<PathBuf>,
    pub terms: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub consistency_threshold: Option<f64>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split: Option<f64>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub beta_grid: Option<String>,
    pub budgets: Option<Vec<f64>>,
    pub distance: Option<String>,
    pub intercept: Option<bool>,
    #[serde(default)]
    pub providers: Vec<ProviderSpec>,
}

impl RunConfig {
    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        rebase(&mut config.templates);
        rebase(&mut config.terms);
        rebase(&mut config.annotations);
        rebase(&mut config.corpus);
        rebase(&mut config.out);
        for provider in &mut config.providers {
            if let ProviderKind::Recorded { path } = &mut provider.kind {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(config)
    }
}
