//! Run configuration: model roster, tasks and an optional template manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::TaskSpec;
use crate::providers::ModelEndpoint;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("model `{0}` listed twice in the roster")]
    DuplicateModel(String),
    #[error("task `{0}` listed twice")]
    DuplicateTask(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    #[serde(flatten)]
    pub spec: TaskSpec,
    /// JSONL source file.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Template manifest; the built-in templates are used when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    /// Roster order is the row order of every emitted table.
    pub models: Vec<ModelEndpoint>,
    pub tasks: Vec<TaskEntry>,
}

impl RunConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.cache_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.templates.as_mut() {
            fix(p);
        }
        for m in &mut self.models {
            if let Some(p) = m.mock_script.as_mut() {
                fix(p);
            }
        }
        for t in &mut self.tasks {
            fix(&mut t.path);
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for m in &self.models {
            if !seen.insert(&m.model_id) {
                return Err(ConfigError::DuplicateModel(m.model_id.clone()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tasks {
            if !seen.insert(&t.spec.task_id) {
                return Err(ConfigError::DuplicateTask(t.spec.task_id.clone()));
            }
        }
        Ok(())
    }

    pub fn model(&self, id: &str) -> Result<&ModelEndpoint, ConfigError> {
        self.models
            .iter()
            .find(|m| m.model_id == id)
            .ok_or_else(|| ConfigError::UnknownModel(id.to_string()))
    }

    pub fn task(&self, id: &str) -> Result<&TaskEntry, ConfigError> {
        self.tasks
            .iter()
            .find(|t| t.spec.task_id == id)
            .ok_or_else(|| ConfigError::UnknownTask(id.to_string()))
    }

    pub fn roster(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_id.clone()).collect()
    }
}
