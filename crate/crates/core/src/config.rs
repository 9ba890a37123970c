//! Run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docs::KeywordConfig;
use crate::filters::FilterConfig;
use crate::history::ReleasePolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{what} does not exist: {path}")]
    MissingPath { what: String, path: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoConfig {
    pub path: PathBuf,
    /// Defaults to the directory name.
    #[serde(default)]
    pub id: Option<String>,
    /// Release metadata sidecar (JSON lines).
    #[serde(default)]
    pub releases: Option<PathBuf>,
    /// Pull request and issue sidecar (JSON lines).
    #[serde(default)]
    pub issues: Option<PathBuf>,
}

impl RepoConfig {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.display().to_string())
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationPaths {
    /// Verdicts on PTM migration candidates.
    pub migrations: Option<PathBuf>,
    /// Verdicts on library migration candidates outside the curated list.
    pub library_migrations: Option<PathBuf>,
    /// Curated analogous library pairs.
    pub analogous_pairs: Option<PathBuf>,
    /// Labeled annotation sheet for PTM artifacts.
    pub ptm_sheet: Option<PathBuf>,
    /// Labeled annotation sheet for library artifacts.
    pub library_sheet: Option<PathBuf>,
    /// Library event ids (one per line) restricting the library
    /// documentation metrics to an annotated sample.
    pub library_sample: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub alpha: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub repos: Vec<RepoConfig>,
    /// Signature catalog CSV; the built-in catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Model hub index, one id per line.
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub policy: ReleasePolicy,
    #[serde(default)]
    pub filters: FilterConfig,
    #[serde(default)]
    pub annotations: AnnotationPaths,
    #[serde(default)]
    pub keywords: KeywordConfig,
    #[serde(default)]
    pub stats: StatsConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            repos: Vec::new(),
            catalog: None,
            index: None,
            out: default_out(),
            policy: ReleasePolicy::default(),
            filters: FilterConfig::default(),
            annotations: AnnotationPaths::default(),
            keywords: KeywordConfig::default(),
            stats: StatsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        for r in &mut self.repos {
            fix(&mut r.path);
            fix_opt(&mut r.releases);
            fix_opt(&mut r.issues);
        }
        fix_opt(&mut self.catalog);
        fix_opt(&mut self.index);
        fix(&mut self.out);
        let a = &mut self.annotations;
        for p in [
            &mut a.migrations,
            &mut a.library_migrations,
            &mut a.analogous_pairs,
            &mut a.ptm_sheet,
            &mut a.library_sheet,
            &mut a.library_sample,
        ] {
            fix_opt(p);
        }
    }

    /// Checks that every referenced input exists and thresholds are sane.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let need = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath {
                    what: what.to_string(),
                    path: p.display().to_string(),
                })
            }
        };
        if self.repos.is_empty() {
            return Err(ConfigError::Invalid("no repositories configured".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for r in &self.repos {
            need("repository", &r.path)?;
            if let Some(p) = &r.releases {
                need("release metadata", p)?;
            }
            if let Some(p) = &r.issues {
                need("issue sidecar", p)?;
            }
            if !ids.insert(r.id()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate repository id {}",
                    r.id()
                )));
            }
        }
        if let Some(p) = &self.catalog {
            need("catalog", p)?;
        }
        if let Some(p) = &self.index {
            need("index", p)?;
        }
        let a = &self.annotations;
        for (what, p) in [
            ("migration annotations", &a.migrations),
            ("library migration annotations", &a.library_migrations),
            ("analogous pairs", &a.analogous_pairs),
            ("PTM annotation sheet", &a.ptm_sheet),
            ("library annotation sheet", &a.library_sheet),
            ("library sample", &a.library_sample),
        ] {
            if let Some(p) = p {
                need(what, p)?;
            }
        }
        self.policy.validate().map_err(ConfigError::Invalid)?;
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(ConfigError::Invalid(
                "stats.alpha must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}
