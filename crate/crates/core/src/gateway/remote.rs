//! Chat-completion provider over HTTPS.
//!
//! Request: `{"model", "messages", "response_format": {"type": "json_object"}}`
//! with a bearer credential. Reply text is read from
//! `choices[0].message.content`.

use std::time::Duration;

use serde_json::json;

use super::{ChatRequest, Provider, ProviderConfig, ProviderError};

pub struct RemoteProvider {
    endpoint: String,
    credential: String,
    model: String,
    timeout: Duration,
}

impl RemoteProvider {
    pub fn new(config: &ProviderConfig) -> Self {
        Self {
            endpoint: config.endpoint.clone().unwrap_or_default(),
            credential: config.credential.clone().unwrap_or_default(),
            model: config.model.clone(),
            timeout: Duration::from_secs(config.timeout_secs),
        }
    }
}

impl Provider for RemoteProvider {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        // Built per call: the blocking client owns a runtime and must not be
        // dropped from async code, and calls here run on blocking threads.
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "response_format": {"type": "json_object"},
        });
        let response = client
            .post(&self.endpoint)
            .bearer_auth(&self.credential)
            .header("x-correlation-id", request.correlation_id.to_string())
            .json(&body)
            .send()
            .map_err(
                |e| if e.is_timeout() { ProviderError::Timeout } else { ProviderError::Unreachable(e.to_string()) },
            )?;
        let status = response.status();
        let text = response.text().map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            let head: String = text.chars().take(200).collect();
            return Err(ProviderError::Unreachable(format!("HTTP {status}: {head}")));
        }
        let envelope: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::Unreachable(format!("bad response body: {e}")))?;
        envelope["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Unreachable("response has no choices[0].message.content".into()))
    }
}
