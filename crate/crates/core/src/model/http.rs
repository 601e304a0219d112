//! Chat-completions HTTP backend.
//!
//! Posts `{"model", "messages": [{"role": "user", "content": prompt}],
//! "temperature", "seed", "max_tokens"}` to `<base>/chat/completions` and
//! reads `choices[0].message.content`. The API key, when set, is sent as a
//! bearer token.

use std::time::Duration;

use serde_json::json;

use super::{DescriptionModel, ModelError, Prompt, SamplingParams};

pub const API_KEY_ENV: &str = "DBDESC_API_KEY";

pub struct HttpModel {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpModel")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "***"))
            .finish()
    }
}

impl HttpModel {
    pub fn new(base_url: &str, model: impl Into<String>, api_key: Option<String>) -> Self {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpModel {
            endpoint,
            model: model.into(),
            api_key,
            agent,
        }
    }

    /// Reads the key from `DBDESC_API_KEY`.
    pub fn from_env(base_url: &str, model: impl Into<String>) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(base_url, model, key)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl DescriptionModel for HttpModel {
    fn name(&self) -> &str {
        &self.model
    }

    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
            "seed": params.seed,
            "max_tokens": params.max_output_tokens,
        });
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(ModelError::Transport(format!("HTTP {status}: {text}"))),
            _ => return Err(ModelError::Rejected(format!("HTTP {status}: {text}"))),
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ModelError::Protocol(format!("invalid JSON response: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ModelError::Protocol("response has no choices[0].message.content".into()))
    }
}
