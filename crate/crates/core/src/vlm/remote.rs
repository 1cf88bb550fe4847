//! HTTP client for a remote VLM endpoint.
//!
//! Request: `{"model": ..., "messages": [{role, parts}], "schema": ...?}`.
//! Response: the answer object with a `usage: {input_tokens, output_tokens}`
//! field, which is split off into [`TokenUsage`]. Transport failures and
//! 5xx responses are retried up to the configured count.

use std::time::Duration;

use super::{TokenUsage, VlmClient, VlmError, VlmRequest, VlmResponse};
use crate::net::{post_json, NetError, SharedLimiter};

pub struct RemoteVlm {
    url: String,
    model: String,
    api_key: Option<String>,
    retries: u32,
    limiter: SharedLimiter,
    client: reqwest::blocking::Client,
}

impl RemoteVlm {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> RemoteVlm {
        RemoteVlm::with_timeout(url, model, Duration::from_secs(300))
    }

    pub fn with_timeout(
        url: impl Into<String>,
        model: impl Into<String>,
        timeout: Duration,
    ) -> RemoteVlm {
        RemoteVlm {
            url: url.into(),
            model: model.into(),
            api_key: None,
            retries: 2,
            limiter: SharedLimiter::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("reqwest client"),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> RemoteVlm {
        self.api_key = key;
        self
    }

    pub fn with_retries(mut self, retries: u32) -> RemoteVlm {
        self.retries = retries;
        self
    }

    pub fn with_limiter(mut self, limiter: SharedLimiter) -> RemoteVlm {
        self.limiter = limiter;
        self
    }
}

impl VlmClient for RemoteVlm {
    fn complete(&self, request: &VlmRequest) -> Result<VlmResponse, VlmError> {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": request.messages,
        });
        if let Some(schema) = &request.schema {
            body["schema"] = schema.clone();
        }
        let raw = post_json(
            &self.client,
            &self.url,
            self.api_key.as_deref(),
            &body,
            self.retries,
            &self.limiter,
        )
        .map_err(|e| match e {
            NetError::Transport { .. } => VlmError::Transport(e.to_string()),
            NetError::Http { status, body } => VlmError::Http { status, body },
        })?;
        let mut content = match raw {
            serde_json::Value::Object(map) => map,
            other => {
                return Err(VlmError::BadResponse(format!(
                    "expected a JSON object, got {other}"
                )))
            }
        };
        let usage_value = content
            .remove("usage")
            .ok_or_else(|| VlmError::BadResponse("response lacks usage".into()))?;
        let usage: TokenUsage = serde_json::from_value(usage_value)
            .map_err(|e| VlmError::BadResponse(format!("malformed usage: {e}")))?;
        Ok(VlmResponse {
            content: serde_json::Value::Object(content),
            usage,
        })
    }
}
