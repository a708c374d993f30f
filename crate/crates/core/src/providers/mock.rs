//! Scripted provider that answers from a fixture file.
//!
//! Script format:
//!
//! ```json
//! {"responses": [
//!   {"model_id": "judge", "tag": "generation/g01", "response": "... The answer is 17."},
//!   {"model_id": "judge", "digest": "<sha256 of prompt text>", "response": "[[Correct]]"}
//! ]}
//! ```
//!
//! Entries match on `(model_id, tag)` first, then `(model_id, prompt digest)`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Backend, BackendReply, ModelEndpoint, ProviderError};
use crate::prompts::RenderedPrompt;

#[derive(Debug, Deserialize)]
struct Script {
    responses: Vec<ScriptEntry>,
}

#[derive(Debug, Deserialize)]
struct ScriptEntry {
    model_id: String,
    #[serde(default)]
    tag: Option<String>,
    #[serde(default)]
    digest: Option<String>,
    response: String,
}

#[derive(Debug, Default, Clone)]
pub struct MockBackend {
    by_tag: HashMap<(String, String), String>,
    by_digest: HashMap<(String, String), String>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond_to_tag(&mut self, model_id: &str, tag: &str, response: &str) -> &mut Self {
        self.by_tag
            .insert((model_id.to_string(), tag.to_string()), response.to_string());
        self
    }

    pub fn respond_to_digest(&mut self, model_id: &str, digest: &str, response: &str) -> &mut Self {
        self.by_digest
            .insert((model_id.to_string(), digest.to_ascii_lowercase()), response.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.by_tag.len() + self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn mock_from_script(path: &Path) -> Result<MockBackend, ProviderError> {
    let text = fs::read_to_string(path).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
    let script: Script =
        serde_json::from_str(&text).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
    let mut mock = MockBackend::new();
    for entry in script.responses {
        match (&entry.tag, &entry.digest) {
            (Some(tag), _) => {
                mock.respond_to_tag(&entry.model_id, tag, &entry.response);
            }
            (None, Some(digest)) => {
                mock.respond_to_digest(&entry.model_id, digest, &entry.response);
            }
            (None, None) => {
                return Err(ProviderError::Script(format!(
                    "entry for `{}` has neither tag nor digest",
                    entry.model_id
                )))
            }
        }
    }
    Ok(mock)
}

impl Backend for MockBackend {
    fn send(&self, endpoint: &ModelEndpoint, prompt: &RenderedPrompt) -> Result<BackendReply, ProviderError> {
        let model = endpoint.model_id.clone();
        if let Some(text) = self.by_tag.get(&(model.clone(), prompt.tag.clone())) {
            return Ok(BackendReply {
                text: text.clone(),
                attempts: 1,
            });
        }
        let digest = prompt.digest();
        match self.by_digest.get(&(model, digest.clone())) {
            Some(text) => Ok(BackendReply {
                text: text.clone(),
                attempts: 1,
            }),
            None => Err(ProviderError::ScriptMiss {
                digest,
                tag: prompt.tag.clone(),
            }),
        }
    }
}
