//! Language-model backends: prompt rendering, rule generation and the
//! rule-induced action distribution.

pub mod backend;
pub mod http;
pub mod prompts;
pub mod rules;
pub mod scripted;

use thiserror::Error;

pub use backend::{Backend, BackendConfig, BackendKind, CallRecord, CompletionRequest};
pub use http::HttpBackend;
pub use prompts::{
    render_gen_prompt, render_maze_update, render_sayselect_update, render_template, SampleFormat,
    Slots, TemplateId,
};
pub use rules::{extract_rule, generate_rules, induce_action_distribution, GeneratedRules, RuleRequest};
pub use scripted::{OracleMode, ScriptedOracle, ScriptedOracleSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unsupported prompt: {0}")]
    UnsupportedPrompt(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
}

/// Build the backend described by `config`.
pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn Backend>, LmError> {
    config.validate()?;
    match config.kind {
        BackendKind::Scripted => {
            let spec = config
                .scripted
                .clone()
                .ok_or_else(|| LmError::Config("scripted backend needs a [scripted] table".into()))?;
            Ok(Box::new(ScriptedOracle::new(spec)?))
        }
        BackendKind::Http => Ok(Box::new(HttpBackend::new(config.clone())?)),
    }
}
