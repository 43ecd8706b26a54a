use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatMessage, ChatProvider, CompletionParams, ProviderError};

/// Environment variable holding the bearer token. The key is never read
/// from configuration files.
pub const API_KEY_ENV: &str = "RECAGENT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL up to and excluding `/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

/// Client for the chat-completions JSON protocol.
pub struct HttpProvider {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

enum Attempt {
    Done(String),
    Retry(ProviderError),
    Fail(ProviderError),
}

impl HttpProvider {
    pub fn new(config: HttpConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider { config, api_key, agent }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(config: HttpConfig) -> Result<Self, ProviderError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(config, key)),
            _ => Err(ProviderError::MissingApiKey(API_KEY_ENV)),
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let result = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body.to_string());
        let mut response = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(ProviderError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(ProviderError::Transport(e.to_string())),
        };
        tracing::debug!(status, body = %text, "chat completion response");
        if status == 429 || status >= 500 {
            return Attempt::Retry(ProviderError::Status { status, body: text });
        }
        if !(200..300).contains(&status) {
            return Attempt::Fail(ProviderError::Status { status, body: text });
        }
        match extract_content(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fail(e),
        }
    }
}

fn extract_content(text: &str) -> Result<String, ProviderError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ProviderError::Decode(e.to_string()))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Decode("missing choices[0].message.content".into()))
}

impl ChatProvider for HttpProvider {
    fn complete(&self, messages: &[ChatMessage], params: &CompletionParams) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        if !params.stop.is_empty() {
            body["stop"] = json!(params.stop);
        }
        tracing::debug!(url = %self.endpoint(), authorization = "Bearer <redacted>", body = %body, "chat completion request");
        let mut last_err = ProviderError::Other("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "transient provider failure");
                    last_err = e;
                }
            }
        }
        Err(last_err)
    }
}
