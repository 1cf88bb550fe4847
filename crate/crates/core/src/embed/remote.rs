//! HTTP client for a remote embedding service.
//!
//! Request: `{"modality": "image" | "text", "payload": <base64 PNG | text>}`.
//! Response: `{"values": [..]}`. The configured dimension is enforced on
//! every response so a misconfigured service cannot poison a store.

use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use image::RgbImage;
use serde::Deserialize;

use super::{EmbedError, Embedder, EmbeddingVector, Modality};
use crate::net::{post_json, SharedLimiter};

pub struct RemoteEmbedder {
    url: String,
    dimension: usize,
    auth_token: Option<String>,
    retries: u32,
    limiter: SharedLimiter,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbedResponse {
    values: Vec<f32>,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, dimension: usize) -> RemoteEmbedder {
        RemoteEmbedder {
            url: url.into(),
            dimension,
            auth_token: None,
            retries: 2,
            limiter: SharedLimiter::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("reqwest client"),
        }
    }

    pub fn with_auth_token(mut self, token: Option<String>) -> RemoteEmbedder {
        self.auth_token = token;
        self
    }

    pub fn with_retries(mut self, retries: u32) -> RemoteEmbedder {
        self.retries = retries;
        self
    }

    /// Shares an in-flight limiter with other remote clients.
    pub fn with_limiter(mut self, limiter: SharedLimiter) -> RemoteEmbedder {
        self.limiter = limiter;
        self
    }

    fn request(&self, modality: Modality, payload: String) -> Result<EmbeddingVector, EmbedError> {
        let body = serde_json::json!({ "modality": modality, "payload": payload });
        let response = post_json(
            &self.client,
            &self.url,
            self.auth_token.as_deref(),
            &body,
            self.retries,
            &self.limiter,
        )
        .map_err(|e| EmbedError::Remote(e.to_string()))?;
        let parsed: EmbedResponse = serde_json::from_value(response)
            .map_err(|e| EmbedError::Remote(format!("malformed response: {e}")))?;
        if parsed.values.len() != self.dimension {
            return Err(EmbedError::Dimension {
                expected: self.dimension,
                actual: parsed.values.len(),
            });
        }
        EmbeddingVector::unit(parsed.values, modality)
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector, EmbedError> {
        if image.width() == 0 || image.height() == 0 {
            return Err(EmbedError::EmptyImage);
        }
        let mut png = Vec::new();
        image
            .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| EmbedError::Remote(format!("PNG encoding failed: {e}")))?;
        self.request(
            Modality::Image,
            base64::engine::general_purpose::STANDARD.encode(png),
        )
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        self.request(Modality::Text, collapsed)
    }
}
