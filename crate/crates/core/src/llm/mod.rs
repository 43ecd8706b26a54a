//! Chat-completion providers and prompt templates.

mod http;
mod scripted;
pub mod templates;

use serde::{Deserialize, Serialize};

pub use http::{HttpConfig, HttpProvider, API_KEY_ENV};
pub use scripted::{ScriptEntry, ScriptedProvider};
pub use templates::{render_prompt, PromptContext, TemplateError, TemplateId, Vars};

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
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f32,
    pub max_tokens: Option<u32>,
    pub stop: Vec<String>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams { temperature: 0.0, max_tokens: None, stop: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Decode(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error("{0}")]
    Other(String),
}

/// Blocking chat-completion backend. Implementations must be safe to call
/// from several sessions at once.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], params: &CompletionParams) -> Result<String, ProviderError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<T> {
    fn complete(&self, messages: &[ChatMessage], params: &CompletionParams) -> Result<String, ProviderError> {
        (**self).complete(messages, params)
    }
}

/// Provider backed by a closure over the messages.
pub struct FnProvider<F>(pub F);

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, messages: &[ChatMessage], _params: &CompletionParams) -> Result<String, ProviderError> {
        (self.0)(messages)
    }
}

/// Sends `prompt` as a single user message with default parameters.
pub fn complete_prompt(provider: &dyn ChatProvider, prompt: String) -> Result<String, ProviderError> {
    provider.complete(&[ChatMessage::user(prompt)], &CompletionParams::default())
}

/// Content of the last user message, falling back to the last message.
pub(crate) fn last_user_text(messages: &[ChatMessage]) -> &str {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .or(messages.last())
        .map(|m| m.content.as_str())
        .unwrap_or("")
}
