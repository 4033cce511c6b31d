use serde::{Deserialize, Serialize};

use super::scripted::ScriptedOracleSpec;
use super::LmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

fn default_temperature() -> f64 {
    0.5
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> f64 {
    30.0
}
fn default_max_tokens() -> u32 {
    256
}
fn default_samples() -> usize {
    16
}
fn default_in_flight() -> usize {
    4
}
fn default_top_logprobs() -> u32 {
    20
}
fn default_true() -> bool {
    true
}
fn default_key_var() -> String {
    "PLLB_API_KEY".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Full chat-completions URL, e.g. `http://host:8000/v1/chat/completions`.
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_key_var")]
    pub api_key_env_var: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Completions drawn per rule when logprobs are unavailable.
    #[serde(default = "default_samples")]
    pub samples_per_estimate: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_true")]
    pub use_logprobs: bool,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u32,
    #[serde(default)]
    pub scripted: Option<ScriptedOracleSpec>,
}

impl BackendConfig {
    pub fn scripted(spec: ScriptedOracleSpec) -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint_url: None,
            model_name: "scripted".into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            timeout_secs: default_timeout_secs(),
            api_key_env_var: default_key_var(),
            max_tokens: default_max_tokens(),
            samples_per_estimate: default_samples(),
            max_in_flight: default_in_flight(),
            use_logprobs: true,
            top_logprobs: default_top_logprobs(),
            scripted: Some(spec),
        }
    }

    pub fn http(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_name: model_name.into(),
            scripted: None,
            ..Self::scripted(ScriptedOracleSpec::default())
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LmError::Config(format!(
                "temperature {} not in [0,2]",
                self.temperature
            )));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(LmError::Config("timeout_secs must be positive".into()));
        }
        if self.samples_per_estimate == 0 || self.max_in_flight == 0 {
            return Err(LmError::Config(
                "samples_per_estimate and max_in_flight must be at least 1".into(),
            ));
        }
        match self.kind {
            BackendKind::Http => {
                if self.endpoint_url.as_deref().unwrap_or("").is_empty() {
                    return Err(LmError::Config("http backend requires endpoint_url".into()));
                }
            }
            BackendKind::Scripted => match &self.scripted {
                Some(spec) => spec.validate()?,
                None => return Err(LmError::Config("scripted backend needs a spec".into())),
            },
        }
        Ok(())
    }

    /// Short provenance tag stored on every rule.
    pub fn backend_id(&self) -> String {
        match self.kind {
            BackendKind::Scripted => match &self.scripted {
                Some(s) => format!("scripted:{}", s.mode.name()),
                None => "scripted".into(),
            },
            BackendKind::Http => format!("http:{}", self.model_name),
        }
    }
}

pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Distinguishes repeated samples of the same prompt.
    pub sample_index: u32,
}

/// One request/response exchange, secrets removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub backend: String,
    pub attempt: u32,
    pub request: serde_json::Value,
    pub status: Option<u16>,
    pub response: Option<serde_json::Value>,
    pub error: Option<String>,
}

/// A text-completion model. Implementations are shared across concurrent
/// runs, so calls take `&self`.
pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LmError>;

    /// Log-probability of each label as the start of the reply, or `None`
    /// when the backend cannot report token probabilities.
    fn label_logprobs(&self, prompt: &str, labels: &[String]) -> Result<Option<Vec<f64>>, LmError>;

    /// Remove and return the calls recorded since the last drain.
    fn drain_calls(&self) -> Vec<CallRecord> {
        Vec::new()
    }
}
