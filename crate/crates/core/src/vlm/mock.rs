//! Deterministic mock clients.
//!
//! [`ScriptedVlm`] plays back a table keyed by query item id: a description
//! for extraction requests, a prediction for structured requests, and an
//! optional sample-count threshold above which it answers all-null (to
//! exercise the reduced-context retry). [`EchoVlm`] answers a structured
//! request by parroting the first context sample's record, which makes
//! closed-loop expectations trivial to state.
//!
//! Both mocks report token usage from the same arithmetic the prompt
//! builder uses (text: one token per four bytes, image: a fixed cost), so
//! traces stay deterministic.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{Part, Role, TokenUsage, VlmClient, VlmError, VlmRequest, VlmResponse};
use crate::domain::Prediction;

pub const MOCK_IMAGE_TOKEN_COST: u64 = 25_000;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ScriptEntry {
    /// Returned for extraction (no-schema) requests.
    pub description: Option<String>,
    /// Returned for structured requests; absent means answer all-null.
    pub prediction: Option<Prediction>,
    /// Answer all-null whenever the prompt carries more context samples
    /// than this.
    pub null_above_samples: Option<usize>,
}

#[derive(Debug, Default)]
pub struct ScriptedVlm {
    entries: HashMap<String, ScriptEntry>,
    image_token_cost: u64,
}

impl ScriptedVlm {
    pub fn new(entries: HashMap<String, ScriptEntry>) -> ScriptedVlm {
        ScriptedVlm {
            entries,
            image_token_cost: MOCK_IMAGE_TOKEN_COST,
        }
    }

    /// Loads a script file: a JSON object mapping item id to entry.
    pub fn from_script_file(path: &Path) -> Result<ScriptedVlm, VlmError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| VlmError::Script(format!("cannot read {}: {e}", path.display())))?;
        let entries: HashMap<String, ScriptEntry> = serde_json::from_str(&raw)
            .map_err(|e| VlmError::Script(format!("cannot parse {}: {e}", path.display())))?;
        Ok(ScriptedVlm::new(entries))
    }

    pub fn with_image_token_cost(mut self, cost: u64) -> ScriptedVlm {
        self.image_token_cost = cost;
        self
    }

    fn entry(&self, request: &VlmRequest) -> Result<&ScriptEntry, VlmError> {
        let id = request
            .query_item_id
            .as_deref()
            .ok_or_else(|| VlmError::Script("request carries no query_item_id".into()))?;
        self.entries
            .get(id)
            .ok_or_else(|| VlmError::Script(format!("no entry for item {id:?}")))
    }
}

impl VlmClient for ScriptedVlm {
    fn complete(&self, request: &VlmRequest) -> Result<VlmResponse, VlmError> {
        let entry = self.entry(request)?;
        let content = match &request.schema {
            None => {
                let text = entry.description.clone().ok_or_else(|| {
                    VlmError::Script(format!(
                        "no description scripted for item {:?}",
                        request.query_item_id.as_deref().unwrap_or("")
                    ))
                })?;
                serde_json::json!({ "text": text })
            }
            Some(_) => {
                let n_samples = request.user_image_parts().saturating_sub(1);
                let over_limit = entry
                    .null_above_samples
                    .is_some_and(|limit| n_samples > limit);
                let prediction = if over_limit {
                    Prediction::default()
                } else {
                    entry.prediction.clone().unwrap_or_default()
                };
                serde_json::to_value(prediction).expect("prediction serializes")
            }
        };
        Ok(VlmResponse {
            usage: estimate_usage(request, &content, self.image_token_cost),
            content,
        })
    }
}

/// Echoes the record of the first context sample back as the prediction.
/// The first text part of the user message is the task, the second is the
/// first sample's record JSON.
#[derive(Debug, Default)]
pub struct EchoVlm {
    pub null_above_samples: Option<usize>,
}

impl EchoVlm {
    pub fn new() -> EchoVlm {
        EchoVlm::default()
    }
}

impl VlmClient for EchoVlm {
    fn complete(&self, request: &VlmRequest) -> Result<VlmResponse, VlmError> {
        if request.schema.is_none() {
            return Err(VlmError::BadResponse(
                "echo client only answers structured requests".into(),
            ));
        }
        let n_samples = request.user_image_parts().saturating_sub(1);
        let prediction = if self
            .null_above_samples
            .is_some_and(|limit| n_samples > limit)
        {
            Prediction::default()
        } else {
            let record_json = request
                .messages
                .iter()
                .filter(|m| m.role == Role::User)
                .flat_map(|m| &m.parts)
                .filter_map(Part::as_text)
                .nth(1)
                .ok_or_else(|| VlmError::BadResponse("no context record to echo".into()))?;
            serde_json::from_str(record_json).map_err(|e| {
                VlmError::BadResponse(format!("context record is not a record: {e}"))
            })?
        };
        let content = serde_json::to_value(prediction).expect("prediction serializes");
        Ok(VlmResponse {
            usage: estimate_usage(request, &content, MOCK_IMAGE_TOKEN_COST),
            content,
        })
    }
}

fn estimate_usage(
    request: &VlmRequest,
    content: &serde_json::Value,
    image_token_cost: u64,
) -> TokenUsage {
    let mut input_tokens = 0u64;
    for message in &request.messages {
        for part in &message.parts {
            input_tokens += match part {
                Part::Text { text } => (text.len() as u64).div_ceil(4),
                Part::Image { .. } => image_token_cost,
            };
        }
    }
    let output_tokens = (content.to_string().len() as u64).div_ceil(4);
    TokenUsage {
        input_tokens,
        output_tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlm::Message;

    fn structured_request(id: &str, n_samples: usize) -> VlmRequest {
        let mut parts = vec![Part::text("Extract all features")];
        for i in 0..n_samples {
            parts.push(Part::image("AA=="));
            parts.push(Part::text(format!("{{\"brand\":\"sample-{i}\"}}")));
        }
        parts.push(Part::image("AA=="));
        VlmRequest {
            messages: vec![Message {
                role: Role::User,
                parts,
            }],
            schema: Some(serde_json::json!({ "type": "object" })),
            query_item_id: Some(id.to_string()),
        }
    }

    #[test]
    fn scripted_returns_prediction_and_description() {
        let mut entries = HashMap::new();
        entries.insert(
            "q1".to_string(),
            ScriptEntry {
                description: Some("Lorenz Saltletts".into()),
                prediction: Some(Prediction {
                    brand: Some("Lorenz".into()),
                    ..Default::default()
                }),
                null_above_samples: None,
            },
        );
        let vlm = ScriptedVlm::new(entries);

        let response = vlm.complete(&structured_request("q1", 2)).unwrap();
        assert_eq!(response.content["brand"], "Lorenz");
        assert!(response.usage.input_tokens > 0 && response.usage.output_tokens > 0);

        let extraction = VlmRequest {
            messages: vec![Message {
                role: Role::User,
                parts: vec![Part::image("AA=="), Part::text("extract")],
            }],
            schema: None,
            query_item_id: Some("q1".into()),
        };
        assert_eq!(
            vlm.complete(&extraction).unwrap().text(),
            Some("Lorenz Saltletts")
        );
    }

    #[test]
    fn scripted_null_threshold_gates_on_sample_count() {
        let mut entries = HashMap::new();
        entries.insert(
            "q1".to_string(),
            ScriptEntry {
                description: None,
                prediction: Some(Prediction {
                    brand: Some("B".into()),
                    ..Default::default()
                }),
                null_above_samples: Some(1),
            },
        );
        let vlm = ScriptedVlm::new(entries);
        let multi = vlm.complete(&structured_request("q1", 3)).unwrap();
        let parsed: Prediction = serde_json::from_value(multi.content).unwrap();
        assert!(parsed.is_all_null());
        let single = vlm.complete(&structured_request("q1", 1)).unwrap();
        assert_eq!(single.content["brand"], "B");
    }

    #[test]
    fn scripted_unknown_item_is_an_error() {
        let vlm = ScriptedVlm::new(HashMap::new());
        assert!(matches!(
            vlm.complete(&structured_request("nope", 1)),
            Err(VlmError::Script(_))
        ));
    }

    #[test]
    fn echo_returns_first_sample_record() {
        let vlm = EchoVlm::new();
        let response = vlm.complete(&structured_request("q", 3)).unwrap();
        assert_eq!(response.content["brand"], "sample-0");
    }

    #[test]
    fn echo_respects_null_threshold() {
        let vlm = EchoVlm {
            null_above_samples: Some(1),
        };
        let multi = vlm.complete(&structured_request("q", 2)).unwrap();
        let parsed: Prediction = serde_json::from_value(multi.content).unwrap();
        assert!(parsed.is_all_null());
        let single = vlm.complete(&structured_request("q", 1)).unwrap();
        assert_eq!(single.content["brand"], "sample-0");
    }

    #[test]
    fn usage_arithmetic_counts_text_and_images() {
        let request = structured_request("q", 1);
        let content = serde_json::json!({ "ok": true });
        let usage = estimate_usage(&request, &content, 100);
        let text_tokens: u64 = request.messages[0]
            .parts
            .iter()
            .filter_map(Part::as_text)
            .map(|t| (t.len() as u64).div_ceil(4))
            .sum();
        assert_eq!(usage.input_tokens, text_tokens + 2 * 100);
        assert_eq!(
            usage.output_tokens,
            (content.to_string().len() as u64).div_ceil(4)
        );
    }
}
