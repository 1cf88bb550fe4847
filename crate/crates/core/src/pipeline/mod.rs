//! The retrieval-augmented pipeline: embed the query product, classify it
//! by majority vote over the top-k neighbours, assemble few-shot context
//! from the classified label's train items, build the prompt under a token
//! budget, and complete it with a structured-output VLM call (retrying once
//! with reduced context on an all-null answer).

mod complete;
mod prompt;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, DatasetItem};
use crate::domain::{Prediction, ProductRecord, PromotionRecord};
use crate::embed::{EmbedError, Embedder, EmbeddingVector, Modality};
use crate::preprocess::{
    crop_product, demask, extract_description, load_image, PreprocessError, Segmenter,
    DEFAULT_SEGMENT_PROMPT,
};
use crate::vlm::VlmClient;
use crate::vstore::{filter_by_label, RetrievalHit, VectorStore, VstoreError};

pub use complete::{complete, Attempt, CompletionTrace};
pub use prompt::{
    estimate_text_tokens, generate_prompt, PromptDocument, PromptPart, DEFAULT_IMAGE_TOKEN_COST,
};

/// Instruction sent as the first prompt part, verbatim.
pub const TASK_PROMPT: &str = "Extract all features";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] VstoreError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("label {label:?} has no train items to draw context from")]
    NoContextAvailable { label: String },
    #[error("prompt context must contain at least one sample")]
    EmptyContext,
    #[error("prompt needs {estimated} tokens even with one sample, budget is {budget}")]
    BudgetExceeded { estimated: u64, budget: u64 },
    #[error("image encoding failed: {0}")]
    ImageEncoding(String),
    #[error("completion failed: {0}")]
    Completion(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Tuning knobs for one run. Defaults follow the reference setup: top-5
/// retrieval, at most three context samples, a 128,000-token budget.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub k: usize,
    pub max_samples: usize,
    pub token_budget: u64,
    pub image_token_cost: u64,
    pub segment_prompt: String,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            k: 5,
            max_samples: 3,
            token_budget: 128_000,
            image_token_cost: DEFAULT_IMAGE_TOKEN_COST,
            segment_prompt: DEFAULT_SEGMENT_PROMPT.to_string(),
        }
    }
}

/// How the winning label was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidedBy {
    /// Unique most frequent label among the hits.
    Majority,
    /// Tie broken by the nearest image-modality hit with a tied label.
    ImageTiebreak,
    /// No image-modality hit carried a tied label; the nearest hit of any
    /// modality with a tied label decided.
    OverallNearestFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub label: String,
    pub votes: BTreeMap<String, usize>,
    pub decided_by: DecidedBy,
    pub hits: Vec<RetrievalHit>,
}

/// Applies the voting rule to an already-retrieved hit list: the most
/// frequent label wins; on a tie, the nearest image-modality hit whose
/// label is tied; failing that, the nearest hit of any modality whose
/// label is tied. The winner always has maximal votes.
pub fn decide_from_hits(hits: &[RetrievalHit]) -> Result<ClassificationOutcome, PipelineError> {
    if hits.is_empty() {
        return Err(PipelineError::InvalidArgument(
            "cannot classify an empty hit list",
        ));
    }
    let mut votes: BTreeMap<String, usize> = BTreeMap::new();
    for hit in hits {
        *votes.entry(hit.label.clone()).or_default() += 1;
    }
    let top = *votes.values().max().expect("votes non-empty");
    let tied: HashSet<&str> = votes
        .iter()
        .filter(|&(_, &count)| count == top)
        .map(|(label, _)| label.as_str())
        .collect();
    let (label, decided_by) = if tied.len() == 1 {
        (
            tied.into_iter().next().expect("one winner").to_string(),
            DecidedBy::Majority,
        )
    } else if let Some(hit) = hits
        .iter()
        .find(|h| h.modality == Modality::Image && tied.contains(h.label.as_str()))
    {
        (hit.label.clone(), DecidedBy::ImageTiebreak)
    } else {
        let hit = hits
            .iter()
            .find(|h| tied.contains(h.label.as_str()))
            .expect("every tied label has at least one hit");
        (hit.label.clone(), DecidedBy::OverallNearestFallback)
    };
    Ok(ClassificationOutcome {
        label,
        votes,
        decided_by,
        hits: hits.to_vec(),
    })
}

/// Retrieves the top-k neighbours of `query` and votes on their labels.
pub fn classify(
    query: &EmbeddingVector,
    store: &VectorStore,
    k: usize,
) -> Result<ClassificationOutcome, PipelineError> {
    if k == 0 {
        return Err(PipelineError::InvalidArgument("k must be at least 1"));
    }
    let hits = store.search_topk(query, k)?;
    decide_from_hits(&hits)
}

/// One few-shot exemplar: a train item's advertisement image plus its
/// ground-truth records.
#[derive(Debug, Clone)]
pub struct FewShotSample {
    pub item_id: String,
    pub image: image::RgbImage,
    pub product: ProductRecord,
    pub promotion: PromotionRecord,
}

impl FewShotSample {
    /// The record rendered the way the model is asked to answer.
    pub fn record(&self) -> Prediction {
        Prediction::from_records(&self.product, &self.promotion)
    }
}

/// Picks context samples for `label`: the label-filtered hits, deduplicated
/// to distinct train items in hit order (an item's image and text hits are
/// one sample), truncated to `max_samples`. When no hit survives the
/// filter, falls back to the label's train items in manifest order. Images
/// are loaded from disk here.
pub fn assemble_context(
    dataset: &Dataset,
    label: &str,
    hits: &[RetrievalHit],
    max_samples: usize,
) -> Result<Vec<FewShotSample>, PipelineError> {
    if max_samples == 0 {
        return Err(PipelineError::InvalidArgument(
            "max_samples must be at least 1",
        ));
    }
    let preferred: Vec<String> = filter_by_label(hits, label)
        .into_iter()
        .map(|hit| hit.item_id)
        .collect();
    let ordered_train = dataset.relational_query(label, &preferred)?;
    if ordered_train.is_empty() {
        return Err(PipelineError::NoContextAvailable {
            label: label.to_string(),
        });
    }
    let preferred_set: HashSet<&str> = preferred.iter().map(String::as_str).collect();
    let mut selected: Vec<&DatasetItem> = ordered_train
        .iter()
        .filter(|item| preferred_set.contains(item.item_id.as_str()))
        .copied()
        .take(max_samples)
        .collect();
    if selected.is_empty() {
        selected = ordered_train.into_iter().take(max_samples).collect();
    }
    selected
        .into_iter()
        .map(|item| {
            Ok(FewShotSample {
                item_id: item.item_id.clone(),
                image: load_image(&item.image_path)?,
                product: item.product.clone(),
                promotion: item.promotion.clone(),
            })
        })
        .collect()
}

/// The pluggable clients one run needs.
#[derive(Clone, Copy)]
pub struct RunClients<'a> {
    pub segmenter: &'a dyn Segmenter,
    pub embedder: &'a dyn Embedder,
    pub vlm: &'a dyn VlmClient,
}

/// What indexing one train item produced. An extraction failure degrades
/// the item to an image-only row instead of dropping it; the error is kept
/// so the operator can see what was skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexOutcome {
    pub item_id: String,
    pub image_indexed: bool,
    pub text_indexed: bool,
    pub error: Option<String>,
}

struct PreparedVectors {
    image: Option<EmbeddingVector>,
    text: Option<EmbeddingVector>,
    error: Option<String>,
}

fn prepare_index_vectors(
    item: &DatasetItem,
    clients: RunClients<'_>,
    config: &PipelineConfig,
) -> PreparedVectors {
    let mut prepared = PreparedVectors {
        image: None,
        text: None,
        error: None,
    };
    let image = match load_image(&item.image_path) {
        Ok(image) => image,
        Err(e) => {
            prepared.error = Some(e.to_string());
            return prepared;
        }
    };
    let mask = match clients.segmenter.segment(&image, &config.segment_prompt) {
        Ok(mask) => mask,
        Err(e) => {
            prepared.error = Some(e.to_string());
            return prepared;
        }
    };
    let image_stage = (|| -> Result<EmbeddingVector, PipelineError> {
        let crop = if mask.is_empty() {
            image.clone()
        } else {
            crop_product(&image, &mask)?
        };
        Ok(clients.embedder.embed_image(&crop)?)
    })();
    match image_stage {
        Ok(vector) => prepared.image = Some(vector),
        Err(e) => {
            prepared.error = Some(e.to_string());
            return prepared;
        }
    }
    let text_stage = (|| -> Result<EmbeddingVector, PipelineError> {
        let demasked = demask(&image, &mask)?;
        let description = extract_description(&demasked, clients.vlm, Some(&item.item_id))?;
        Ok(clients.embedder.embed_text(&description)?)
    })();
    match text_stage {
        Ok(vector) => prepared.text = Some(vector),
        Err(e) => prepared.error = Some(e.to_string()),
    }
    prepared
}

/// Indexes train items: embeds each item's product crop and, when the
/// description extraction succeeds, its description text. Embedding runs
/// on a worker pool; insertion is sequential in item order (image before
/// text), so assigned store ids are deterministic.
pub fn index_items(
    items: &[&DatasetItem],
    store: &mut VectorStore,
    clients: RunClients<'_>,
    config: &PipelineConfig,
    workers: usize,
) -> Vec<IndexOutcome> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool");
    let prepared: Vec<PreparedVectors> = pool.install(|| {
        items
            .par_iter()
            .map(|item| prepare_index_vectors(item, clients, config))
            .collect()
    });
    items
        .iter()
        .zip(prepared)
        .map(|(item, vectors)| {
            let mut outcome = IndexOutcome {
                item_id: item.item_id.clone(),
                image_indexed: false,
                text_indexed: false,
                error: vectors.error,
            };
            let fail = |outcome: &mut IndexOutcome, e: String| match &mut outcome.error {
                Some(existing) => {
                    existing.push_str("; ");
                    existing.push_str(&e);
                }
                None => outcome.error = Some(e),
            };
            if let Some(vector) = vectors.image {
                match store.add(vector, item.label.as_str(), item.item_id.as_str()) {
                    Ok(_) => outcome.image_indexed = true,
                    Err(e) => fail(&mut outcome, e.to_string()),
                }
            }
            if let Some(vector) = vectors.text {
                match store.add(vector, item.label.as_str(), item.item_id.as_str()) {
                    Ok(_) => outcome.text_indexed = true,
                    Err(e) => fail(&mut outcome, e.to_string()),
                }
            }
            outcome
        })
        .collect()
}

/// Everything recorded about one test item. Stage failures land in
/// `error` with whatever artifacts were produced before the failure; a
/// record with `completion: None` scores as incorrect on every target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemRunRecord {
    pub item_id: String,
    pub outcome: Option<ClassificationOutcome>,
    pub completion: Option<CompletionTrace>,
    pub error: Option<String>,
}

/// Runs the full pipeline for one test item. Never fails: errors are
/// captured in the returned record so a batch always completes.
pub fn run_item(
    item: &DatasetItem,
    store: &VectorStore,
    dataset: &Dataset,
    clients: RunClients<'_>,
    config: &PipelineConfig,
) -> ItemRunRecord {
    let mut record = ItemRunRecord {
        item_id: item.item_id.clone(),
        outcome: None,
        completion: None,
        error: None,
    };
    let result = (|| -> Result<(), PipelineError> {
        let image = load_image(&item.image_path)?;
        let mask = clients.segmenter.segment(&image, &config.segment_prompt)?;
        // A failed segmentation (empty mask) degrades to the full image.
        let crop = if mask.is_empty() {
            image.clone()
        } else {
            crop_product(&image, &mask)?
        };
        let query = clients.embedder.embed_image(&crop)?;
        let outcome = classify(&query, store, config.k)?;
        let label = outcome.label.clone();
        let hits = outcome.hits.clone();
        record.outcome = Some(outcome);
        let context = assemble_context(dataset, &label, &hits, config.max_samples)?;
        // The prompt shows the original advertisement, not the crop: the
        // model needs the printed offer details around the product.
        let prompt = generate_prompt(
            TASK_PROMPT,
            &context,
            &image,
            config.token_budget,
            config.image_token_cost,
        )?;
        let trace = complete(
            &prompt,
            clients.vlm,
            Prediction::output_schema(),
            Some(&item.item_id),
        )?;
        record.completion = Some(trace);
        Ok(())
    })();
    if let Err(e) = result {
        record.error = Some(e.to_string());
    }
    record
}

/// Runs every item on a worker pool, preserving input order in the output.
pub fn run_batch(
    items: &[&DatasetItem],
    store: &VectorStore,
    dataset: &Dataset,
    clients: RunClients<'_>,
    config: &PipelineConfig,
    workers: usize,
) -> Vec<ItemRunRecord> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool");
    pool.install(|| {
        items
            .par_iter()
            .map(|item| run_item(item, store, dataset, clients, config))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vstore::StoreId;

    fn hit(store_id: u64, label: &str, modality: Modality, distance: f64) -> RetrievalHit {
        RetrievalHit {
            store_id: StoreId(store_id),
            label: label.to_string(),
            item_id: format!("item-{store_id}"),
            modality,
            distance,
        }
    }

    #[test]
    fn unique_mode_wins_by_majority() {
        let hits = vec![
            hit(0, "B", Modality::Image, 0.1),
            hit(1, "B", Modality::Text, 0.2),
            hit(2, "B", Modality::Image, 0.3),
            hit(3, "A", Modality::Image, 0.4),
            hit(4, "C", Modality::Text, 0.5),
        ];
        let outcome = decide_from_hits(&hits).unwrap();
        assert_eq!(outcome.label, "B");
        assert_eq!(outcome.decided_by, DecidedBy::Majority);
        assert_eq!(outcome.votes["B"], 3);
        assert_eq!(outcome.votes["A"], 1);
        assert_eq!(outcome.hits.len(), 5);
    }

    #[test]
    fn tie_broken_by_nearest_image_hit_with_tied_label() {
        // A and C tie at two votes each; the nearest image-modality hit
        // carrying a tied label is the C hit at distance 0.3.
        let hits = vec![
            hit(0, "A", Modality::Text, 0.1),
            hit(1, "A", Modality::Text, 0.2),
            hit(2, "C", Modality::Image, 0.3),
            hit(3, "C", Modality::Text, 0.4),
            hit(4, "B", Modality::Image, 0.5),
        ];
        let outcome = decide_from_hits(&hits).unwrap();
        assert_eq!(outcome.label, "C");
        assert_eq!(outcome.decided_by, DecidedBy::ImageTiebreak);
    }

    #[test]
    fn tie_without_image_hits_falls_back_to_nearest_tied_hit() {
        // The nearest hit overall is an image hit, but its label is not
        // tied for the lead, so it cannot break the tie; the nearest hit
        // with a tied label is the A text hit.
        let hits = vec![
            hit(0, "C", Modality::Image, 0.05),
            hit(1, "A", Modality::Text, 0.1),
            hit(2, "B", Modality::Text, 0.2),
            hit(3, "A", Modality::Text, 0.3),
            hit(4, "B", Modality::Text, 0.4),
        ];
        let outcome = decide_from_hits(&hits).unwrap();
        assert_eq!(outcome.label, "A");
        assert_eq!(outcome.decided_by, DecidedBy::OverallNearestFallback);
        // The winner still holds maximal votes.
        let top = outcome.votes.values().max().copied().unwrap();
        assert_eq!(outcome.votes[&outcome.label], top);
    }

    #[test]
    fn single_hit_is_a_majority() {
        let outcome = decide_from_hits(&[hit(0, "X", Modality::Text, 0.2)]).unwrap();
        assert_eq!(outcome.label, "X");
        assert_eq!(outcome.decided_by, DecidedBy::Majority);
    }

    #[test]
    fn empty_hits_are_rejected() {
        assert!(decide_from_hits(&[]).is_err());
    }

    #[test]
    fn classify_searches_then_decides() {
        use crate::embed::EmbeddingVector;
        let mut store = VectorStore::new();
        let v = |values: &[f32], m| EmbeddingVector::unit(values.to_vec(), m).unwrap();
        store
            .add(v(&[1.0, 0.0], Modality::Image), "near", "i0")
            .unwrap();
        store
            .add(v(&[0.9, 0.1], Modality::Image), "near", "i1")
            .unwrap();
        store
            .add(v(&[0.0, 1.0], Modality::Image), "far", "i2")
            .unwrap();
        let outcome = classify(&v(&[1.0, 0.0], Modality::Image), &store, 3).unwrap();
        assert_eq!(outcome.label, "near");
        assert_eq!(outcome.hits.len(), 3);
        assert!(classify(&v(&[1.0, 0.0], Modality::Image), &store, 0).is_err());
    }

    /// With k=1 the single hit's label always wins as a unique mode.
    #[test]
    fn k1_is_always_majority() {
        for modality in [Modality::Image, Modality::Text] {
            let outcome = decide_from_hits(&[hit(3, "solo", modality, 0.7)]).unwrap();
            assert_eq!(outcome.label, "solo");
            assert_eq!(outcome.decided_by, DecidedBy::Majority);
        }
    }
}
