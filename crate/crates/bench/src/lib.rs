//! Deterministic input generators for the benchmarks: seeded stores,
//! synthetic leaflet crops, and few-shot samples shaped like real
//! manifest entries.

use image::RgbImage;
use leafrag_core::pipeline::FewShotSample;
use leafrag_core::{EmbeddingVector, Modality, ProductRecord, PromotionRecord, VectorStore};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(
    rng: &mut ChaCha8Rng,
    dimension: usize,
    modality: Modality,
) -> EmbeddingVector {
    let values: Vec<f32> = (0..dimension)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    EmbeddingVector::unit(values, modality).expect("non-degenerate by construction")
}

/// A store shaped like a production index: image and text rows mixed
/// across `n_labels` classes.
pub fn seeded_store(n_records: usize, dimension: usize, n_labels: usize) -> VectorStore {
    let mut rng = rng(11);
    let mut store = VectorStore::new();
    for i in 0..n_records {
        let modality = if rng.random_bool(0.4) {
            Modality::Text
        } else {
            Modality::Image
        };
        let vector = random_vector(&mut rng, dimension, modality);
        store
            .add(
                vector,
                format!("class-{:03}", i % n_labels),
                format!("item-{i:05}"),
            )
            .expect("consistent dimensions");
    }
    store
}

/// A crop-sized image with enough structure that PNG encoding does real
/// work instead of collapsing a flat fill.
pub fn crop_image(width: u32, height: u32) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let stripe = if (x / 12 + y / 9) % 2 == 0 { 200 } else { 40 };
        image::Rgb([(x % 256) as u8, (y % 256) as u8, stripe])
    })
}

/// Few-shot samples with records shaped like real manifest entries.
pub fn sample_context(n: usize) -> Vec<FewShotSample> {
    (0..n)
        .map(|i| {
            let product: ProductRecord = serde_json::from_value(serde_json::json!({
                "brand": "Lorenz",
                "product_category": ["Saltletts Sticks"],
                "GTINs": ["04018077683015", "04018077686719"],
                "weight_number": 250.0,
                "weight_unit": "Gramm",
                "different_sorts": "yes",
            }))
            .expect("record literal parses");
            let promotion: PromotionRecord = serde_json::from_value(serde_json::json!({
                "price": 0.99,
                "regular_price": 1.87,
                "relative_discount": 47,
            }))
            .expect("record literal parses");
            FewShotSample {
                item_id: format!("sample-{i}"),
                image: crop_image(220, 160),
                product,
                promotion,
            }
        })
        .collect()
}
