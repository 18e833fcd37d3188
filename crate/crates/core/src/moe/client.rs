use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::gate::rule_gate;
use super::prompt::parse_prompt_state;
use super::registry::ExpertRegistry;

/// Environment variable that overrides `llm.endpoint`.
pub const ENDPOINT_ENV: &str = "GENCSI_LLM_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Completion endpoint URL. Empty selects the built-in mock.
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_tokens: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_ms: 2000,
            max_tokens: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("timeout")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("bad response: {0}")]
    Response(String),
}

/// Single-shot text completion.
///
/// Implementations should give up after `timeout`; the gate also discards
/// replies that arrive late.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, ClientError>;
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// JSON over HTTP: POST `{prompt, max_tokens, temperature: 0}`, expects `{text}`.
pub struct HttpCompletionClient {
    endpoint: String,
    max_tokens: u32,
}

impl HttpCompletionClient {
    pub fn new(endpoint: &str, max_tokens: u32) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            max_tokens,
        }
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, ClientError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let body = CompletionRequest {
            prompt,
            max_tokens: self.max_tokens,
            temperature: 0.0,
        };
        let mut resp = agent.post(&self.endpoint).send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout,
            other => ClientError::Transport(other.to_string()),
        })?;
        let parsed: CompletionResponse = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout,
            other => ClientError::Response(other.to_string()),
        })?;
        Ok(parsed.text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    Text(String),
    Timeout,
    Fail(String),
}

/// Replays a fixed script, cycling when it runs out.
pub struct ScriptedClient {
    script: Vec<ScriptedReply>,
    next: AtomicUsize,
}

impl ScriptedClient {
    pub fn new(script: Vec<ScriptedReply>) -> Self {
        assert!(!script.is_empty(), "script must not be empty");
        Self {
            script,
            next: AtomicUsize::new(0),
        }
    }

    pub fn always(text: &str) -> Self {
        Self::new(vec![ScriptedReply::Text(text.to_string())])
    }

    pub fn calls(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, _prompt: &str, _timeout: Duration) -> Result<String, ClientError> {
        let k = self.next.fetch_add(1, Ordering::SeqCst);
        match &self.script[k % self.script.len()] {
            ScriptedReply::Text(t) => Ok(t.clone()),
            ScriptedReply::Timeout => Err(ClientError::Timeout),
            ScriptedReply::Fail(m) => Err(ClientError::Transport(m.clone())),
        }
    }
}

/// Offline stand-in for a language model: reads the user state back out of
/// the prompt and answers with the rule gate's choice.
pub struct RuleEchoClient {
    registry: ExpertRegistry,
}

impl RuleEchoClient {
    pub fn new(registry: ExpertRegistry) -> Self {
        Self { registry }
    }
}

impl CompletionClient for RuleEchoClient {
    fn complete(&self, prompt: &str, _timeout: Duration) -> Result<String, ClientError> {
        let state = parse_prompt_state(prompt).ok_or_else(|| ClientError::Response("no user state in prompt".into()))?;
        let d = rule_gate(&state, &self.registry).map_err(|e| ClientError::Response(e.to_string()))?;
        Ok(format!("expert: {}", d.expert_id))
    }
}

/// HTTP client for a non-empty endpoint (after the environment override),
/// otherwise the rule-echo mock.
pub fn make_client(cfg: &LlmConfig, registry: &ExpertRegistry) -> Box<dyn CompletionClient> {
    let endpoint = std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| cfg.endpoint.clone());
    if endpoint.trim().is_empty() {
        Box::new(RuleEchoClient::new(registry.clone()))
    } else {
        Box::new(HttpCompletionClient::new(endpoint.trim(), cfg.max_tokens))
    }
}
