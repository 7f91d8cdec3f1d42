use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, ChatSession, StepTag};

/// One scripted reply. `matcher`, when set, must be a substring of the
/// request's last user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    pub tag: StepTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matcher: Option<String>,
    pub response: String,
}

impl MockEntry {
    pub fn new(tag: StepTag, response: impl Into<String>) -> Self {
        Self {
            tag,
            matcher: None,
            response: response.into(),
        }
    }

    pub fn matching(tag: StepTag, matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            tag,
            matcher: Some(matcher.into()),
            response: response.into(),
        }
    }

    fn accepts(&self, request: &ChatRequest) -> bool {
        self.tag == request.tag
            && match (&self.matcher, request.last_user_message()) {
                (None, _) => true,
                (Some(m), Some(last)) => last.contains(m.as_str()),
                (Some(_), None) => false,
            }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        Self {
            model_id: None,
            entries,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }

    /// Tags that have no entry at all.
    pub fn missing_tags(&self) -> Vec<StepTag> {
        StepTag::ALL
            .into_iter()
            .filter(|t| !self.entries.iter().any(|e| e.tag == *t))
            .collect()
    }
}

/// Replays a [`MockScript`].
///
/// Within a session, the first not-yet-used entry accepting the request
/// wins; once every accepting entry has been used, the last of them keeps
/// answering. This lets a script say "fail the first verification, pass the
/// rest".
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: Arc<MockScript>,
    model_id: String,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let model_id = script.model_id.clone().unwrap_or_else(|| "mock".to_string());
        Self {
            script: Arc::new(script),
            model_id,
        }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    pub fn session(&self) -> MockSession<'_> {
        MockSession {
            backend: self,
            used: vec![false; self.script.entries.len()],
        }
    }
}

impl ChatBackend for MockBackend {
    fn open_session(&self) -> Box<dyn ChatSession + '_> {
        Box::new(self.session())
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

pub struct MockSession<'a> {
    backend: &'a MockBackend,
    used: Vec<bool>,
}

impl ChatSession for MockSession<'_> {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.check()?;
        let entries = &self.backend.script.entries;
        let accepting: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].accepts(request)).collect();
        let chosen = accepting
            .iter()
            .copied()
            .find(|&i| !self.used[i])
            .or_else(|| accepting.last().copied())
            .ok_or(BackendError::NoScriptEntry { tag: request.tag })?;
        self.used[chosen] = true;
        let content = entries[chosen].response.clone();
        if content.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(ChatResponse {
            content,
            model_id: self.backend.model_id.clone(),
            latency_ms: 0,
        })
    }
}
