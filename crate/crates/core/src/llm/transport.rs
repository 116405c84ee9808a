use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.1,
            max_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LlmRequest<'a> {
    pub usecase: &'a str,
    pub target: &'a str,
    pub prompt: &'a str,
    pub params: SamplingParams,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no replay fixture at {0}")]
    MissingFixture(PathBuf),
    #[error("i/o error: {0}")]
    Io(String),
}

/// A chat-completion backend. Implementations must be shareable across
/// threads so distinct targets can be sent concurrently.
pub trait Transport: Send + Sync {
    fn send(&self, request: &LlmRequest<'_>) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &LlmRequest<'_>) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, request: &LlmRequest<'_>) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

/// First 16 hex digits of the SHA-256 of the prompt.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))[..16].to_string()
}

fn path_segment(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

/// Reads responses from `dir/<usecase>/<target>/<prompt key>.txt`.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    pub dir: PathBuf,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayTransport { dir: dir.into() }
    }

    pub fn fixture_path(&self, usecase: &str, target: &str, prompt: &str) -> PathBuf {
        fixture_path(&self.dir, usecase, target, prompt)
    }

    /// Stores `response` as the fixture for this prompt.
    pub fn record(&self, request: &LlmRequest<'_>, response: &str) -> Result<PathBuf, TransportError> {
        let path = self.fixture_path(request.usecase, request.target, request.prompt);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| TransportError::Io(e.to_string()))?;
        }
        std::fs::write(&path, response).map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(path)
    }
}

pub fn fixture_path(dir: &Path, usecase: &str, target: &str, prompt: &str) -> PathBuf {
    dir.join(path_segment(usecase))
        .join(path_segment(target))
        .join(format!("{}.txt", prompt_key(prompt)))
}

impl Transport for ReplayTransport {
    fn send(&self, request: &LlmRequest<'_>) -> Result<String, TransportError> {
        let path = self.fixture_path(request.usecase, request.target, request.prompt);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(TransportError::MissingFixture(path)),
            Err(e) => Err(TransportError::Io(e.to_string())),
        }
    }
}

/// Replies from a fixed script; once exhausted the last entry repeats.
#[derive(Debug)]
pub struct StubTransport {
    script: Vec<Result<String, TransportError>>,
    calls: Mutex<usize>,
}

impl StubTransport {
    pub fn script(script: Vec<Result<String, TransportError>>) -> Self {
        assert!(!script.is_empty(), "stub needs at least one reply");
        StubTransport {
            script,
            calls: Mutex::new(0),
        }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self::script(vec![Ok(text.into())])
    }

    pub fn failing(cause: impl Into<String>) -> Self {
        Self::script(vec![Err(TransportError::Network(cause.into()))])
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Transport for StubTransport {
    fn send(&self, _request: &LlmRequest<'_>) -> Result<String, TransportError> {
        let mut calls = self.calls.lock().unwrap_or_else(|e| e.into_inner());
        let reply = self.script[(*calls).min(self.script.len() - 1)].clone();
        *calls += 1;
        reply
    }
}
