use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, ChatSession};

pub const ENV_API_BASE: &str = "VOT_API_BASE";
pub const ENV_API_KEY: &str = "VOT_API_KEY";
pub const ENV_MODEL: &str = "VOT_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 8,
        }
    }

    /// Reads `VOT_API_BASE`, `VOT_API_KEY` and `VOT_MODEL`. Explicit values
    /// passed in take precedence over the environment.
    pub fn from_env(
        base_url: Option<String>,
        api_key: Option<String>,
        model: Option<String>,
    ) -> Result<Self, BackendError> {
        let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let base_url = base_url
            .or_else(|| env(ENV_API_BASE))
            .ok_or_else(|| BackendError::Config(format!("no API base (set {ENV_API_BASE} or pass one)")))?;
        let model = model
            .or_else(|| env(ENV_MODEL))
            .ok_or_else(|| BackendError::Config(format!("no model (set {ENV_MODEL} or pass one)")))?;
        let mut cfg = Self::new(base_url, model);
        cfg.api_key = api_key.or_else(|| env(ENV_API_KEY));
        Ok(cfg)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            free: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GatePermit(self)
    }
}

struct GatePermit<'a>(&'a Gate);

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

/// Blocking client for an OpenAI-style chat-completions endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            gate: Gate::new(config.max_in_flight),
            config,
            client,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let mut builder = self.client.post(self.config.endpoint()).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::HttpStatus(status.as_u16()));
        }
        let text = response.text().map_err(classify)?;
        let parsed: CompletionBody =
            serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::MalformedResponse("no choices[0].message.content".into()))?;
        if content.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(content)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.check()?;
        let _permit = self.gate.acquire();
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Ok(content) => {
                    return Ok(ChatResponse {
                        content,
                        model_id: self.config.model.clone(),
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(e) if attempt < self.config.max_retries && retryable(&e) => {
                    thread::sleep(self.config.backoff_base * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn classify(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Transport(e.to_string())
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Timeout | BackendError::Transport(_) => true,
        BackendError::HttpStatus(code) => *code == 429 || *code >= 500,
        _ => false,
    }
}

struct HttpSession<'a>(&'a HttpBackend);

impl ChatSession for HttpSession<'_> {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.0.complete(request)
    }
}

impl ChatBackend for HttpBackend {
    fn open_session(&self) -> Box<dyn ChatSession + '_> {
        Box::new(HttpSession(self))
    }

    fn model_id(&self) -> &str {
        &self.config.model
    }
}
