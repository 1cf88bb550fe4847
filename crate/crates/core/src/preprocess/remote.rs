//! HTTP client for a remote segmentation service (LangSAM-style).
//!
//! Request: `{"image": <base64 PNG>, "prompt": <string>}`.
//! Response: `{"mask_rle": <run-length string>, "width": .., "height": ..}`.
//! The mask dimensions must match the input image exactly.

use std::time::Duration;

use image::RgbImage;
use serde::Deserialize;

use super::{png_base64, PreprocessError, SegmentationMask, Segmenter};
use crate::net::{post_json, SharedLimiter};

pub struct RemoteSegmenter {
    url: String,
    auth_token: Option<String>,
    retries: u32,
    limiter: SharedLimiter,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct SegmentResponse {
    mask_rle: String,
    width: u32,
    height: u32,
}

impl RemoteSegmenter {
    pub fn new(url: impl Into<String>) -> RemoteSegmenter {
        RemoteSegmenter {
            url: url.into(),
            auth_token: None,
            retries: 2,
            limiter: SharedLimiter::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
        }
    }

    pub fn with_auth_token(mut self, token: Option<String>) -> RemoteSegmenter {
        self.auth_token = token;
        self
    }

    pub fn with_retries(mut self, retries: u32) -> RemoteSegmenter {
        self.retries = retries;
        self
    }

    pub fn with_limiter(mut self, limiter: SharedLimiter) -> RemoteSegmenter {
        self.limiter = limiter;
        self
    }
}

impl Segmenter for RemoteSegmenter {
    fn segment(&self, image: &RgbImage, prompt: &str) -> Result<SegmentationMask, PreprocessError> {
        let data = png_base64(image).map_err(PreprocessError::Segmentation)?;
        let body = serde_json::json!({ "image": data, "prompt": prompt });
        let response = post_json(
            &self.client,
            &self.url,
            self.auth_token.as_deref(),
            &body,
            self.retries,
            &self.limiter,
        )
        .map_err(|e| PreprocessError::Segmentation(e.to_string()))?;
        let parsed: SegmentResponse = serde_json::from_value(response)
            .map_err(|e| PreprocessError::Segmentation(format!("malformed response: {e}")))?;
        if (parsed.width, parsed.height) != image.dimensions() {
            return Err(PreprocessError::Segmentation(format!(
                "mask is {}x{} but image is {}x{}",
                parsed.width,
                parsed.height,
                image.width(),
                image.height()
            )));
        }
        SegmentationMask::from_rle(&parsed.mask_rle, parsed.width, parsed.height, prompt)
    }
}
