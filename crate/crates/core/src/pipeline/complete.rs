//! Structured completion with the all-null retry.
//!
//! A model that cannot ground the query in the provided context answers
//! with every field null. When that happens and the prompt carried more
//! than one context sample, the request is retried once with the context
//! reduced to a single sample; the trace records both attempts. Responses
//! that fail schema parsing count as all-null so the retry still fires.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{PipelineError, PromptDocument};
use crate::domain::Prediction;
use crate::vlm::VlmClient;

/// One model call: how many context samples the prompt carried and whether
/// the answer came back all-null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub n_samples: usize,
    pub all_null: bool,
}

/// The result of completing one prompt, across all attempts. Token counts
/// are summed over attempts; `elapsed_seconds` is wall time and therefore
/// the only non-deterministic field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionTrace {
    pub prediction: Prediction,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub elapsed_seconds: f64,
    pub attempts: Vec<Attempt>,
    /// Parse failures encountered along the way, kept for diagnosis.
    #[serde(default)]
    pub schema_errors: Vec<String>,
}

/// Sends the prompt for structured output, retrying once with a single
/// context sample if the answer is all-null. Transport-level client
/// failures abort the item; parse failures do not.
pub fn complete(
    prompt: &PromptDocument,
    client: &dyn VlmClient,
    schema: serde_json::Value,
    query_item_id: Option<&str>,
) -> Result<CompletionTrace, PipelineError> {
    let started = Instant::now();
    let mut trace = CompletionTrace {
        prediction: Prediction::default(),
        input_tokens: 0,
        output_tokens: 0,
        elapsed_seconds: 0.0,
        attempts: Vec::with_capacity(2),
        schema_errors: Vec::new(),
    };
    let attempt = |document: &PromptDocument, trace: &mut CompletionTrace| {
        let request = document.to_request(schema.clone(), query_item_id);
        let response = client
            .complete(&request)
            .map_err(|e| PipelineError::Completion(e.to_string()))?;
        trace.input_tokens += response.usage.input_tokens;
        trace.output_tokens += response.usage.output_tokens;
        let prediction = match serde_json::from_value::<Prediction>(response.content) {
            Ok(prediction) => prediction,
            Err(e) => {
                trace.schema_errors.push(e.to_string());
                Prediction::default()
            }
        };
        let all_null = prediction.is_all_null();
        trace.attempts.push(Attempt {
            n_samples: document.n_samples(),
            all_null,
        });
        trace.prediction = prediction;
        Ok::<bool, PipelineError>(all_null)
    };
    let all_null = attempt(prompt, &mut trace)?;
    if all_null && prompt.n_samples() > 1 {
        attempt(&prompt.reduced_to(1), &mut trace)?;
    }
    trace.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok(trace)
}
