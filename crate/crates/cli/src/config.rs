//! Run configuration shared by the inference-capable subcommands.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;

use seqdep::llm::{ReplayTransport, SamplingParams, Transport};
use seqdep::Diagnostic;

use crate::ops::{usage, Engine, EngineKind};
use crate::remote::{RemoteTransport, URL_VAR};

pub const DEFAULT_MODEL: &str = "deepseek-r1";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_RUN_DIR: &str = "seqdep-runs";

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Inference backend.
    #[arg(long, value_enum, default_value_t = EngineKind::Rule)]
    pub engine: EngineKind,
    /// Answer model requests from recorded replies under DIR.
    #[arg(long, value_name = "DIR")]
    pub replay: Option<PathBuf>,
    /// Model name sent to the chat-completion endpoint.
    #[arg(long, default_value = DEFAULT_MODEL)]
    pub model: String,
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    #[arg(long, default_value_t = 4096)]
    pub max_tokens: u32,
    /// Cap on concurrent model requests during global inference.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Log request and response bodies of the remote endpoint.
    #[arg(long)]
    pub trace: bool,
    /// Where `--trace` writes.
    #[arg(long, value_name = "DIR", default_value = DEFAULT_RUN_DIR)]
    pub run_dir: PathBuf,
}

impl Default for EngineArgs {
    fn default() -> Self {
        EngineArgs {
            engine: EngineKind::Rule,
            replay: None,
            model: DEFAULT_MODEL.into(),
            temperature: 0.1,
            max_tokens: 4096,
            max_in_flight: 4,
            trace: false,
            run_dir: DEFAULT_RUN_DIR.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportChoice {
    None,
    Replay(PathBuf),
    /// Endpoint from `SEQDEP_LLM_URL`.
    Remote(String),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub engine: EngineKind,
    pub transport: TransportChoice,
    pub model: String,
    pub params: SamplingParams,
    pub max_in_flight: usize,
    pub trace: bool,
    pub run_dir: PathBuf,
    pub addr: String,
}

impl RunConfig {
    /// A replay directory takes precedence over the environment endpoint.
    pub fn new(inputs: Vec<PathBuf>, args: &EngineArgs) -> Self {
        let transport = match (&args.replay, std::env::var(URL_VAR)) {
            (Some(dir), _) => TransportChoice::Replay(dir.clone()),
            (None, Ok(url)) if !url.is_empty() => TransportChoice::Remote(url),
            _ => TransportChoice::None,
        };
        RunConfig {
            inputs,
            out_dir: None,
            engine: args.engine,
            transport,
            model: args.model.clone(),
            params: SamplingParams {
                temperature: args.temperature,
                max_tokens: args.max_tokens,
            },
            max_in_flight: args.max_in_flight.max(1),
            trace: args.trace,
            run_dir: args.run_dir.clone(),
            addr: DEFAULT_ADDR.into(),
        }
    }

    pub fn validate(&self) -> Result<(), Diagnostic> {
        if !(0.0..=2.0).contains(&self.params.temperature) {
            return Err(usage(format!(
                "temperature must lie in [0, 2], got {}",
                self.params.temperature
            )));
        }
        if self.engine == EngineKind::Llm && self.transport == TransportChoice::None {
            return Err(usage(format!(
                "the llm engine needs --replay DIR or {URL_VAR}"
            )));
        }
        Ok(())
    }

    pub fn build_transport(&self) -> Result<Option<Arc<dyn Transport>>, Diagnostic> {
        Ok(match &self.transport {
            TransportChoice::None => None,
            TransportChoice::Replay(dir) => Some(Arc::new(ReplayTransport::new(dir.clone()))),
            TransportChoice::Remote(_) => {
                let remote = RemoteTransport::from_env(&self.model)
                    .map_err(|e| usage(e.to_string()))?
                    .ok_or_else(|| usage(format!("{URL_VAR} is not set")))?;
                let remote = if self.trace {
                    remote.with_trace(self.run_dir.clone())
                } else {
                    remote
                };
                Some(Arc::new(remote))
            }
        })
    }

    pub fn engine<'t>(&self, transport: Option<&'t dyn Transport>) -> Result<Engine<'t>, Diagnostic> {
        engine_for(self.engine, transport, self.params, self.max_in_flight)
    }
}

pub fn engine_for(
    kind: EngineKind,
    transport: Option<&dyn Transport>,
    params: SamplingParams,
    max_in_flight: usize,
) -> Result<Engine<'_>, Diagnostic> {
    match (kind, transport) {
        (EngineKind::Rule, _) => Ok(Engine::Rule),
        (EngineKind::Llm, Some(transport)) => Ok(Engine::Llm {
            transport,
            params,
            max_in_flight,
        }),
        (EngineKind::Llm, None) => Err(usage("no model transport is configured")),
    }
}
