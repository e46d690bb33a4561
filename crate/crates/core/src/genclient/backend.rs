//! Chat backend abstraction: one HTTP client speaking the common
//! chat-completions JSON shape, and a scripted mock for tests.

use std::sync::Mutex;
use std::time::Duration;

use serde_json::json;
use thiserror::Error;

/// One chat call.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("http status {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
}

/// A model endpoint that answers one request at a time. Implementations
/// must be shareable across worker threads.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// Deterministic backend for tests: plays back scripted responses in
/// order and captures every request for inspection.
pub struct MockBackend {
    name: String,
    responses: Mutex<std::vec::IntoIter<Result<String, BackendError>>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl MockBackend {
    pub fn scripted(responses: Vec<Result<String, BackendError>>) -> Self {
        Self {
            name: "mock".to_string(),
            responses: Mutex::new(responses.into_iter()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Requests seen so far, in call order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.requests.lock().unwrap().push(request.clone());
        self.responses
            .lock()
            .unwrap()
            .next()
            .unwrap_or_else(|| Err(BackendError::Transport("mock script exhausted".to_string())))
    }
}

/// Connection settings for one real endpoint. The key itself stays in
/// the environment; config carries only the variable name.
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub name: String,
    /// Full chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after a timeout; 0 reports the first timeout as-is.
    pub timeout_retries: u32,
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let api_key = std::env::var(&self.config.api_key_env).map_err(|_| {
            BackendError::Transport(format!(
                "credential variable {} not set",
                self.config.api_key_env
            ))
        })?;
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;

        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if status != 200 {
            let mut message: String = text.chars().take(300).collect();
            if message.is_empty() {
                message = "empty body".to_string();
            }
            return Err(BackendError::Http { status, message });
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Transport(format!("malformed response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::Transport(
                    "response carries no choices[0].message.content".to_string(),
                )
            })
    }
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut attempts = 0;
        loop {
            match self.attempt(request) {
                Err(BackendError::Timeout) if attempts < self.config.timeout_retries => {
                    attempts += 1;
                }
                other => return other,
            }
        }
    }
}
