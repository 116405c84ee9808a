//! Chat-completion transport over HTTP.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::{json, Value};

use seqdep::llm::{LlmRequest, Transport, TransportError};

pub const URL_VAR: &str = "SEQDEP_LLM_URL";
pub const TOKEN_VAR: &str = "SEQDEP_LLM_TOKEN";

pub struct RemoteTransport {
    url: String,
    token: Option<String>,
    model: String,
    trace_dir: Option<PathBuf>,
    seq: AtomicUsize,
    client: reqwest::blocking::Client,
}

impl RemoteTransport {
    pub fn new(url: impl Into<String>, token: Option<String>, model: impl Into<String>) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(RemoteTransport {
            url: url.into(),
            token,
            model: model.into(),
            trace_dir: None,
            seq: AtomicUsize::new(0),
            client,
        })
    }

    /// Reads the endpoint and bearer token from the environment; `None`
    /// when no endpoint is configured.
    pub fn from_env(model: &str) -> Result<Option<Self>, TransportError> {
        let Ok(url) = std::env::var(URL_VAR) else {
            return Ok(None);
        };
        let token = std::env::var(TOKEN_VAR).ok().filter(|t| !t.is_empty());
        Self::new(url, token, model).map(Some)
    }

    /// Writes every request and response body under `dir`.
    pub fn with_trace(mut self, dir: impl Into<PathBuf>) -> Self {
        self.trace_dir = Some(dir.into());
        self
    }

    pub fn body(&self, request: &LlmRequest<'_>) -> Value {
        json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        })
    }

    fn trace(&self, request: &LlmRequest<'_>, n: usize, suffix: &str, body: &str) {
        let Some(dir) = &self.trace_dir else { return };
        let dir = dir.join(sanitize(request.usecase));
        let path = dir.join(format!("{}-{n:04}.{suffix}.json", sanitize(request.target)));
        // Tracing is best effort.
        let _ = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(path, body));
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// `choices[0].message.content` of a chat-completion reply.
pub fn completion_text(reply: &Value) -> Option<&str> {
    reply.get("choices")?.get(0)?.get("message")?.get("content")?.as_str()
}

impl Transport for RemoteTransport {
    fn send(&self, request: &LlmRequest<'_>) -> Result<String, TransportError> {
        let n = self.seq.fetch_add(1, Ordering::Relaxed);
        let body = self.body(request);
        self.trace(request, n, "request", &serde_json::to_string_pretty(&body).unwrap_or_default());
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::Network(e.to_string()))?;
        self.trace(request, n, "response", &text);
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let reply: Value = serde_json::from_str(&text)
            .map_err(|e| TransportError::Network(format!("reply is not JSON: {e}")))?;
        completion_text(&reply)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Network("reply has no choices[0].message.content".into()))
    }
}
