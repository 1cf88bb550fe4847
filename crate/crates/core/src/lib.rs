//! Retrieval-augmented feature extraction for retail leaflet images.
//!
//! Advertisement images are preprocessed (product segmented, cropped, and
//! the printed description extracted), embedded into a joint image+text
//! vector store, and classified by majority vote over their nearest
//! neighbours. The classified label selects few-shot samples that are
//! assembled into a token-budgeted prompt for a vision-language model,
//! whose structured answer is parsed, retried once on an all-null
//! response, and finally scored per target.
//!
//! Everything model-shaped (segmenter, embedder, VLM) sits behind a trait
//! with a deterministic in-process implementation next to the HTTP one, so
//! the whole pipeline runs and tests without network access.

pub mod dataset;
pub mod domain;
pub mod embed;
pub mod eval;
pub mod net;
pub mod pipeline;
pub mod preprocess;
pub mod vlm;
pub mod vstore;

pub use dataset::{Dataset, DatasetItem, DatasetStats, Split};
pub use domain::{
    normalize_gtin, ClassLabel, Decimal, DifferentSorts, Gtin, Prediction, ProductRecord,
    PromotionRecord, Weight, WeightUnit,
};
pub use embed::{cosine_distance, Embedder, EmbeddingVector, Modality, ReferenceEmbedder};
pub use eval::{cost_report, score_run, Evaluation, GtinMetric, PriceTable, TargetScorecard};
pub use pipeline::{
    index_items, run_batch, run_item, ClassificationOutcome, IndexOutcome, ItemRunRecord,
    PipelineConfig, RunClients,
};
pub use preprocess::{SegmentationMask, Segmenter, StubSegmenter};
pub use vlm::{ScriptedVlm, VlmClient, VlmRequest, VlmResponse};
pub use vstore::{RetrievalHit, StoreId, VectorStore};
