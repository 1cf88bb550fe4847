//! Vision-language model clients.
//!
//! A request is an ordered list of messages whose parts interleave text and
//! images; a response is a JSON object (the structured answer, or `{"text"}`
//! for plain extraction) plus token usage. The trait is implemented by a
//! remote HTTP client and by deterministic mocks used in tests and offline
//! runs.

mod mock;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{EchoVlm, ScriptEntry, ScriptedVlm};
pub use remote::RemoteVlm;

#[derive(Debug, Error)]
pub enum VlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unusable model response: {0}")]
    BadResponse(String),
    #[error("mock script: {0}")]
    Script(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

/// One piece of a message: UTF-8 text or a base64-encoded PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Part {
    Text { text: String },
    Image { data: String },
}

impl Part {
    pub fn text(text: impl Into<String>) -> Part {
        Part::Text { text: text.into() }
    }

    pub fn image(data: impl Into<String>) -> Part {
        Part::Image { data: data.into() }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Part::Text { text } => Some(text),
            Part::Image { .. } => None,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, Part::Image { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

/// A completion request. `schema` asks for structured output; without it
/// the model is expected to answer `{"text": ...}`. `query_item_id` never
/// goes over the wire: it keys scripted mock responses.
#[derive(Debug, Clone, PartialEq)]
pub struct VlmRequest {
    pub messages: Vec<Message>,
    pub schema: Option<serde_json::Value>,
    pub query_item_id: Option<String>,
}

impl VlmRequest {
    /// Image parts across all user messages; for a few-shot prompt this is
    /// the sample count plus the trailing query image.
    pub fn user_image_parts(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .flat_map(|m| &m.parts)
            .filter(|p| p.is_image())
            .count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// A model response: the JSON content (usage stripped) and token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct VlmResponse {
    pub content: serde_json::Value,
    pub usage: TokenUsage,
}

impl VlmResponse {
    /// The `text` field of a plain-extraction response.
    pub fn text(&self) -> Option<&str> {
        self.content.get("text").and_then(|v| v.as_str())
    }
}

pub trait VlmClient: Send + Sync {
    fn complete(&self, request: &VlmRequest) -> Result<VlmResponse, VlmError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_serialize_with_type_tags() {
        let text = serde_json::to_value(Part::text("hello")).unwrap();
        assert_eq!(text, serde_json::json!({ "type": "text", "text": "hello" }));
        let image = serde_json::to_value(Part::image("QUJD")).unwrap();
        assert_eq!(
            image,
            serde_json::json!({ "type": "image", "data": "QUJD" })
        );
    }

    #[test]
    fn image_part_counting_ignores_system_messages() {
        let request = VlmRequest {
            messages: vec![
                Message {
                    role: Role::System,
                    parts: vec![Part::image("AA==")],
                },
                Message {
                    role: Role::User,
                    parts: vec![Part::text("task"), Part::image("AA=="), Part::image("AA==")],
                },
            ],
            schema: None,
            query_item_id: None,
        };
        assert_eq!(request.user_image_parts(), 2);
    }

    #[test]
    fn response_text_accessor() {
        let response = VlmResponse {
            content: serde_json::json!({ "text": "Lorenz Saltletts" }),
            usage: TokenUsage::default(),
        };
        assert_eq!(response.text(), Some("Lorenz Saltletts"));
        let structured = VlmResponse {
            content: serde_json::json!({ "brand": "X" }),
            usage: TokenUsage::default(),
        };
        assert_eq!(structured.text(), None);
    }
}
