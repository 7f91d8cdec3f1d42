//! Chat-completion backends.
//!
//! The orchestrator talks to a [`ChatBackend`] through per-run
//! [`ChatSession`]s. Two implementations ship: [`MockBackend`], which replays
//! a tagged script deterministically, and [`HttpBackend`], a blocking client
//! for any `/chat/completions` endpoint.

mod http;
mod mock;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockBackend, MockEntry, MockScript, MockSession};

/// Which reasoning step issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepTag {
    Step1,
    Step2,
    Step3,
    Step4Pre,
    Step4Score,
    Step4Rank,
    Step5,
}

impl StepTag {
    pub const ALL: [StepTag; 7] = [
        Self::Step1,
        Self::Step2,
        Self::Step3,
        Self::Step4Pre,
        Self::Step4Score,
        Self::Step4Rank,
        Self::Step5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Step1 => "STEP1",
            Self::Step2 => "STEP2",
            Self::Step3 => "STEP3",
            Self::Step4Pre => "STEP4_PRE",
            Self::Step4Score => "STEP4_SCORE",
            Self::Step4Rank => "STEP4_RANK",
            Self::Step5 => "STEP5",
        }
    }
}

impl fmt::Display for StepTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub tag: StepTag,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(tag: StepTag, messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            tag,
            temperature: 0.0,
        }
    }

    pub fn single(tag: StepTag, prompt: impl Into<String>) -> Self {
        Self::new(tag, vec![ChatMessage::user(prompt)])
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .last()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn check(&self) -> Result<(), BackendError> {
        if self.last_user_message().is_none() {
            return Err(BackendError::InvalidRequest("last message must come from the user".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub model_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("no script entry for {tag}")]
    NoScriptEntry { tag: StepTag },
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Timeout => "TIMEOUT",
            Self::HttpStatus(_) => "HTTP_STATUS",
            Self::NoScriptEntry { .. } => "NO_SCRIPT_ENTRY",
            Self::EmptyCompletion => "EMPTY_COMPLETION",
            Self::InvalidRequest(_) => "INVALID_REQUEST",
            Self::Transport(_) => "TRANSPORT",
            Self::MalformedResponse(_) => "MALFORMED_RESPONSE",
            Self::Config(_) => "CONFIG",
        }
    }
}

/// A conversation with a backend. Mock cursor state lives here, so two
/// sessions never observe each other.
pub trait ChatSession: Send {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

/// Shared across threads; hands out independent sessions.
pub trait ChatBackend: Send + Sync {
    fn open_session(&self) -> Box<dyn ChatSession + '_>;

    fn model_id(&self) -> &str;
}
