//! Prompt assembly under a token budget.
//!
//! A prompt document is strictly ordered: the task text, then each context
//! sample as an image part followed by its record as JSON text, then the
//! query image. When the estimate exceeds the budget, whole samples are
//! dropped from the tail (the most distant, least relevant context) until
//! it fits; a prompt that cannot fit with a single sample is an error.

use image::RgbImage;

use super::{FewShotSample, PipelineError};
use crate::preprocess::png_base64;
use crate::vlm::{Message, Part, Role, VlmRequest};

/// Flat token estimate per image part. The real tokenizer is unknown and
/// model-specific; this is deliberately a coarse constant, calibrated so a
/// three-sample prompt plus query lands near real-world input sizes.
pub const DEFAULT_IMAGE_TOKEN_COST: u64 = 25_000;

/// Text tokens are estimated at four bytes per token, rounded up.
pub fn estimate_text_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug, Clone)]
struct ContextPart {
    item_id: String,
    image_b64: String,
    record_json: String,
}

/// One part of the rendered prompt, in send order.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptPart<'a> {
    Text(&'a str),
    Image(&'a str),
}

#[derive(Debug, Clone)]
pub struct PromptDocument {
    task: String,
    samples: Vec<ContextPart>,
    query_image_b64: String,
    image_token_cost: u64,
}

impl PromptDocument {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn sample_item_ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.item_id.as_str()).collect()
    }

    /// The prompt in send order: task text, per-sample image + record
    /// text, query image.
    pub fn parts(&self) -> Vec<PromptPart<'_>> {
        let mut parts = Vec::with_capacity(2 + 2 * self.samples.len());
        parts.push(PromptPart::Text(&self.task));
        for sample in &self.samples {
            parts.push(PromptPart::Image(&sample.image_b64));
            parts.push(PromptPart::Text(&sample.record_json));
        }
        parts.push(PromptPart::Image(&self.query_image_b64));
        parts
    }

    pub fn estimated_tokens(&self) -> u64 {
        let mut tokens = estimate_text_tokens(&self.task);
        for sample in &self.samples {
            tokens += self.image_token_cost + estimate_text_tokens(&sample.record_json);
        }
        tokens + self.image_token_cost
    }

    /// A copy truncated to the first `n` samples, for the reduced-context
    /// retry.
    pub fn reduced_to(&self, n: usize) -> PromptDocument {
        let mut reduced = self.clone();
        reduced.samples.truncate(n.max(1));
        reduced
    }

    /// Renders the document as a single-user-message request.
    pub fn to_request(&self, schema: serde_json::Value, query_item_id: Option<&str>) -> VlmRequest {
        let parts = self
            .parts()
            .into_iter()
            .map(|part| match part {
                PromptPart::Text(text) => Part::text(text),
                PromptPart::Image(data) => Part::image(data),
            })
            .collect();
        VlmRequest {
            messages: vec![Message {
                role: Role::User,
                parts,
            }],
            schema: Some(schema),
            query_item_id: query_item_id.map(str::to_string),
        }
    }
}

/// Builds the prompt from assembled context, dropping tail samples while
/// the token estimate exceeds `budget`.
pub fn generate_prompt(
    task: &str,
    context: &[FewShotSample],
    query_image: &RgbImage,
    budget: u64,
    image_token_cost: u64,
) -> Result<PromptDocument, PipelineError> {
    if context.is_empty() {
        return Err(PipelineError::EmptyContext);
    }
    let samples = context
        .iter()
        .map(|sample| {
            let record_json = serde_json::to_string(&sample.record()).expect("record serializes");
            Ok(ContextPart {
                item_id: sample.item_id.clone(),
                image_b64: png_base64(&sample.image).map_err(PipelineError::ImageEncoding)?,
                record_json,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let query_image_b64 = png_base64(query_image).map_err(PipelineError::ImageEncoding)?;
    let mut document = PromptDocument {
        task: task.to_string(),
        samples,
        query_image_b64,
        image_token_cost,
    };
    while document.estimated_tokens() > budget && document.n_samples() > 1 {
        document.samples.pop();
    }
    let estimated = document.estimated_tokens();
    if estimated > budget {
        return Err(PipelineError::BudgetExceeded { estimated, budget });
    }
    Ok(document)
}
