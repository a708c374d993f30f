//! Prompt templates for answer generation and answer judgment.
//!
//! Templates live as plain text files with `{name}` placeholders and are
//! indexed by a JSON registry manifest keyed on `(stage, kind, strategy)`.
//! The shipped set is compiled in; [`TemplateRegistry::load`] reads an
//! alternative set from disk and checks every file against its recorded
//! SHA-256.
//!
//! Rendered prompts are sent as a single user message.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Item, TaskKind};

/// Placeholder names a template body may reference.
pub const PLACEHOLDERS: &[&str] = &[
    "question",
    "options",
    "category",
    "answer_a",
    "ref_answer",
    "response",
    "response_a",
    "response_b",
];

pub const DEFAULT_CATEGORY: &str = "miscellaneous topics";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("no {stage:?} template registered for {kind} (strategy {strategy:?})")]
    MissingTemplate {
        stage: Stage,
        kind: TaskKind,
        strategy: Option<Strategy>,
    },
    #[error("template `{template_id}` needs a value for `{{{name}}}`")]
    MissingBinding { template_id: String, name: String },
    #[error("self-reference judging requires a non-empty reference answer")]
    MissingReference,
    #[error("template `{template_id}` uses unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { template_id: String, name: String },
    #[error("template file {path} does not match its registered sha256")]
    DigestMismatch { path: PathBuf },
    #[error("malformed registry manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Generation,
    Judgment,
}

/// Judging strategy: plain chain-of-thought, or guided by the judge's own answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    CoT,
    SelfReference,
}

impl Strategy {
    /// Short form used in file names and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            Strategy::CoT => "cot",
            Strategy::SelfReference => "self-ref",
        }
    }

    pub fn from_slug(s: &str) -> Option<Strategy> {
        match s {
            "cot" => Some(Strategy::CoT),
            "self-ref" => Some(Strategy::SelfReference),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub stage: Stage,
    pub kind: TaskKind,
    pub strategy: Option<Strategy>,
    pub body: String,
}

impl PromptTemplate {
    /// Placeholder names in order of appearance (with repeats).
    pub fn placeholders(&self) -> Vec<&str> {
        scan(&self.body)
            .into_iter()
            .filter_map(|seg| match seg {
                Segment::Placeholder(name) => Some(name),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    fn validate(&self) -> Result<(), PromptError> {
        for name in self.placeholders() {
            if !PLACEHOLDERS.contains(&name) {
                return Err(PromptError::UnknownPlaceholder {
                    template_id: self.template_id.clone(),
                    name: name.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Single-pass substitution; bound values are never re-expanded.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        for seg in scan(&self.body) {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Placeholder(name) => match bindings.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        return Err(PromptError::MissingBinding {
                            template_id: self.template_id.clone(),
                            name: name.to_string(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

// `{ident}` is a placeholder; any other brace is literal text.
fn scan(body: &str) -> Vec<Segment<'_>> {
    let bytes = body.as_bytes();
    let mut segments = Vec::new();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                if literal_start < i {
                    segments.push(Segment::Literal(&body[literal_start..i]));
                }
                segments.push(Segment::Placeholder(&body[i + 1..j]));
                i = j + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    if literal_start < bytes.len() {
        segments.push(Segment::Literal(&body[literal_start..]));
    }
    segments
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub template_id: String,
    /// SHA-256 over the sorted `(name, value)` bindings.
    pub bindings_digest: String,
    /// Caller-assigned label, e.g. `generation/g01`; scripted mocks can match on it.
    #[serde(default)]
    pub tag: String,
}

impl RenderedPrompt {
    /// SHA-256 of the full prompt text, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }
}

fn bindings_digest(bindings: &BTreeMap<&str, String>) -> String {
    let mut hasher = Sha256::new();
    for (name, value) in bindings {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((value.len() as u64).to_le_bytes());
        hasher.update(value.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub template_id: String,
    pub stage: Stage,
    pub kind: TaskKind,
    pub strategy: Option<Strategy>,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryManifest {
    pub templates: Vec<RegistryEntry>,
}

type Key = (Stage, TaskKind, Option<Strategy>);

/// Immutable set of templates indexed by `(stage, kind, strategy)`.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<Key, PromptTemplate>,
    digests: BTreeMap<String, String>,
}

const BUILTIN_MANIFEST: &str = include_str!("../templates/registry.json");
const BUILTIN_FILES: &[(&str, &str)] = &[
    ("generation_numeric.txt", include_str!("../templates/generation_numeric.txt")),
    (
        "generation_multiple_choice.txt",
        include_str!("../templates/generation_multiple_choice.txt"),
    ),
    ("generation_pairwise.txt", include_str!("../templates/generation_pairwise.txt")),
    ("judgment_pointwise_cot.txt", include_str!("../templates/judgment_pointwise_cot.txt")),
    ("judgment_meta_cot.txt", include_str!("../templates/judgment_meta_cot.txt")),
    (
        "judgment_pointwise_self_reference.txt",
        include_str!("../templates/judgment_pointwise_self_reference.txt"),
    ),
    (
        "judgment_meta_self_reference.txt",
        include_str!("../templates/judgment_meta_self_reference.txt"),
    ),
];

impl TemplateRegistry {
    /// The shipped template set.
    pub fn builtin() -> Self {
        let manifest: RegistryManifest = serde_json::from_str(BUILTIN_MANIFEST).expect("builtin registry manifest");
        Self::from_manifest(manifest, |entry| {
            BUILTIN_FILES
                .iter()
                .find(|(name, _)| *name == entry.path)
                .map(|(_, body)| body.as_bytes().to_vec())
                .ok_or_else(|| PromptError::Io {
                    path: PathBuf::from(&entry.path),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "not embedded"),
                })
        })
        .expect("builtin templates are valid")
    }

    /// Loads a registry manifest; template paths resolve relative to the manifest.
    pub fn load(manifest_path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(manifest_path).map_err(|source| PromptError::Io {
            path: manifest_path.to_path_buf(),
            source,
        })?;
        let manifest: RegistryManifest = serde_json::from_str(&text)?;
        let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_manifest(manifest, |entry| {
            let path = base.join(&entry.path);
            fs::read(&path).map_err(|source| PromptError::Io { path, source })
        })
    }

    fn from_manifest(
        manifest: RegistryManifest,
        read: impl Fn(&RegistryEntry) -> Result<Vec<u8>, PromptError>,
    ) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        let mut digests = BTreeMap::new();
        for entry in manifest.templates {
            let bytes = read(&entry)?;
            if !hex::encode(Sha256::digest(&bytes)).eq_ignore_ascii_case(&entry.sha256) {
                return Err(PromptError::DigestMismatch {
                    path: PathBuf::from(&entry.path),
                });
            }
            let mut body = String::from_utf8(bytes).map_err(|e| PromptError::Io {
                path: PathBuf::from(&entry.path),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })?;
            // Files end with a newline; rendered prompts do not.
            if body.ends_with('\n') {
                body.pop();
                if body.ends_with('\r') {
                    body.pop();
                }
            }
            let template = PromptTemplate {
                template_id: entry.template_id.clone(),
                stage: entry.stage,
                kind: entry.kind,
                strategy: entry.strategy,
                body,
            };
            template.validate()?;
            digests.insert(entry.template_id.clone(), entry.sha256.to_ascii_lowercase());
            templates.insert((entry.stage, entry.kind, entry.strategy), template);
        }
        Ok(TemplateRegistry { templates, digests })
    }

    pub fn get(&self, stage: Stage, kind: TaskKind, strategy: Option<Strategy>) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(&(stage, kind, strategy))
            .ok_or(PromptError::MissingTemplate { stage, kind, strategy })
    }

    /// `template_id -> sha256`, for run manifests.
    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    pub fn render_generation_prompt(&self, item: &Item) -> Result<RenderedPrompt, PromptError> {
        let kind = item.kind();
        let template = self.get(Stage::Generation, kind, None)?;
        let mut bindings = BTreeMap::new();
        bindings.insert("question", item.question.clone());
        match kind {
            TaskKind::NumericQA => {}
            TaskKind::MultipleChoice => {
                bindings.insert("options", item.lettered_options());
                bindings.insert(
                    "category",
                    item.meta
                        .get("category")
                        .cloned()
                        .unwrap_or_else(|| DEFAULT_CATEGORY.to_string()),
                );
            }
            TaskKind::PairwiseVerdict => {
                if let Some(a) = &item.response_a {
                    bindings.insert("response_a", a.clone());
                }
                if let Some(b) = &item.response_b {
                    bindings.insert("response_b", b.clone());
                }
            }
        }
        finish(template, bindings)
    }

    /// Renders a judgment prompt around one agent output.
    ///
    /// With [`Strategy::CoT`] any supplied reference is ignored. Multiple-choice
    /// questions carry their lettered options inside `{question}`; pairwise
    /// questions carry both assistant responses, since the meta-judge
    /// templates have no other slot for them.
    pub fn render_judgment_prompt(
        &self,
        item: &Item,
        agent_output: &str,
        strategy: Strategy,
        reference: Option<&str>,
    ) -> Result<RenderedPrompt, PromptError> {
        let kind = item.kind();
        let template = self.get(Stage::Judgment, kind, Some(strategy))?;
        let mut bindings = BTreeMap::new();
        bindings.insert("question", judgment_question(item));
        let answer_slot = match kind {
            TaskKind::PairwiseVerdict => "response",
            _ => "answer_a",
        };
        bindings.insert(answer_slot, agent_output.to_string());
        if strategy == Strategy::SelfReference {
            match reference {
                Some(r) if !r.trim().is_empty() => {
                    bindings.insert("ref_answer", r.to_string());
                }
                _ => return Err(PromptError::MissingReference),
            }
        }
        finish(template, bindings)
    }
}

fn judgment_question(item: &Item) -> String {
    match item.kind() {
        TaskKind::NumericQA => item.question.clone(),
        TaskKind::MultipleChoice => format!("{}\nOptions:\n{}", item.question, item.lettered_options()),
        TaskKind::PairwiseVerdict => format!(
            "{}\n\n[The Start of Assistant A's Answer]\n{}\n[The End of Assistant A's Answer]\n\n\
             [The Start of Assistant B's Answer]\n{}\n[The End of Assistant B's Answer]",
            item.question,
            item.response_a.as_deref().unwrap_or_default(),
            item.response_b.as_deref().unwrap_or_default(),
        ),
    }
}

fn finish(template: &PromptTemplate, bindings: BTreeMap<&str, String>) -> Result<RenderedPrompt, PromptError> {
    let text = template.render(&bindings)?;
    Ok(RenderedPrompt {
        text,
        template_id: template.template_id.clone(),
        bindings_digest: bindings_digest(&bindings),
        tag: String::new(),
    })
}
