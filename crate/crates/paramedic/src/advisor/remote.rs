//! Remote advisor backend: a single generic chat-completion request shape
//! (model name, one user message, temperature) over HTTPS with bearer
//! authentication. Covers OpenAI-compatible endpoints behind one config
//! surface; the credential comes from an environment variable and is never
//! logged.

use std::time::Duration;

use serde_json::json;

use super::{AdvisorBackend, AdvisorError, BackendError, RepairPrompt};
use crate::Scalar;

pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
    temperature: Scalar,
}

impl RemoteBackend {
    /// Reads the credential from `api_key_env` immediately: a missing
    /// variable is a configuration error raised before any network activity.
    pub fn new(
        endpoint: String,
        model: String,
        api_key_env: &str,
        timeout: Duration,
        temperature: Scalar,
    ) -> Result<Self, AdvisorError> {
        let api_key = std::env::var(api_key_env).map_err(|_| {
            AdvisorError::Config(format!(
                "credential environment variable {api_key_env} is not set"
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .build()
            .map_err(|e| AdvisorError::Config(e.to_string()))?;
        Ok(Self { client, endpoint, model, api_key, temperature })
    }
}

impl AdvisorBackend for RemoteBackend {
    fn complete(&self, prompt: &RepairPrompt) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt.text }],
            "temperature": self.temperature,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError(format!("request failed: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError(format!("endpoint returned {status}")));
        }
        let payload: serde_json::Value = response
            .json()
            .map_err(|e| BackendError(format!("invalid JSON from endpoint: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError("completion missing choices[0].message.content".into()))
    }

    fn label(&self) -> String {
        format!("remote:{}", self.model)
    }
}
