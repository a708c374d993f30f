//! Run-directory layout and JSONL persistence.
//!
//! ```text
//! <run>/config.json                                   config snapshot
//! <run>/items/<task>.jsonl                            sampled evaluation set
//! <run>/items/<task>.manifest.json                    sampling provenance
//! <run>/generation/<task>/<model>.jsonl               GenerationRecord
//! <run>/judgment/<task>/<strategy>/<judge>.jsonl      JudgmentRecord
//! <run>/judgment/<task>/<strategy>/<judge>.prompts.jsonl
//! <run>/manifests/<stage>-<...>.json                  RunManifest
//! ```
//!
//! Files are written whole through a temporary sibling and renamed into
//! place, so a crash never leaves a truncated record file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::prompts::Strategy;
use crate::providers::model_dir_name;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        serde_json::to_writer(&mut out, r).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| StoreError::Json {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Like [`read_jsonl`] but a missing file reads as empty.
pub fn read_jsonl_or_empty<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    if path.exists() {
        read_jsonl(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn items(&self, task: &str) -> PathBuf {
        self.root.join("items").join(format!("{}.jsonl", model_dir_name(task)))
    }

    pub fn sample_manifest(&self, task: &str) -> PathBuf {
        self.root.join("items").join(format!("{}.manifest.json", model_dir_name(task)))
    }

    pub fn generation(&self, task: &str, model: &str) -> PathBuf {
        self.root
            .join("generation")
            .join(model_dir_name(task))
            .join(format!("{}.jsonl", model_dir_name(model)))
    }

    pub fn judgment_dir(&self, task: &str, strategy: Strategy) -> PathBuf {
        self.root.join("judgment").join(model_dir_name(task)).join(strategy.slug())
    }

    pub fn judgment(&self, task: &str, strategy: Strategy, judge: &str) -> PathBuf {
        self.judgment_dir(task, strategy)
            .join(format!("{}.jsonl", model_dir_name(judge)))
    }

    pub fn judgment_prompts(&self, task: &str, strategy: Strategy, judge: &str) -> PathBuf {
        self.judgment_dir(task, strategy)
            .join(format!("{}.prompts.jsonl", model_dir_name(judge)))
    }

    pub fn generation_manifest(&self, task: &str) -> PathBuf {
        self.root
            .join("manifests")
            .join(format!("generation-{}.json", model_dir_name(task)))
    }

    pub fn judgment_manifest(&self, task: &str, strategy: Strategy, judge: &str) -> PathBuf {
        self.root.join("manifests").join(format!(
            "judgment-{}-{}-{}.json",
            model_dir_name(task),
            strategy.slug(),
            model_dir_name(judge)
        ))
    }

    /// Judgment record files under `<run>/judgment`, sorted by path.
    pub fn judgment_files(&self) -> Result<Vec<PathBuf>, StoreError> {
        let mut files = Vec::new();
        let base = self.root.join("judgment");
        if !base.exists() {
            return Ok(files);
        }
        let mut stack = vec![base];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
                let path = entry.map_err(io_err(&dir))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "jsonl")
                    && !path.to_string_lossy().ends_with(".prompts.jsonl")
                {
                    files.push(path);
                }
            }
        }
        files.sort();
        Ok(files)
    }
}
