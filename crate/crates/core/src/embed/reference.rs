//! A deterministic, model-free embedder.
//!
//! It exists so the whole pipeline can run and be tested offline: no
//! weights, no network, bit-identical output across runs and platforms.
//! It is not a semantic model, but it preserves the property the pipeline
//! needs: similar inputs land near each other, dissimilar ones do not.

use image::RgbImage;

use super::{EmbedError, Embedder, EmbeddingVector, Modality};

/// Output dimension shared by the image and text paths.
pub const REFERENCE_DIMENSION: usize = 64;

const HIST_BINS: usize = 8;
const GRID: u32 = 2;

/// Image features: per-channel 8-bin intensity histograms (24 values) plus
/// a 2x2 grid of per-channel spatial means (12 values), zero-padded to
/// [`REFERENCE_DIMENSION`]. Text features: hashed character trigram counts
/// over all 64 buckets. Both are L2-normalized.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReferenceEmbedder;

impl ReferenceEmbedder {
    pub fn new() -> ReferenceEmbedder {
        ReferenceEmbedder
    }
}

impl Embedder for ReferenceEmbedder {
    fn dimension(&self) -> usize {
        REFERENCE_DIMENSION
    }

    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector, EmbedError> {
        let (width, height) = image.dimensions();
        if width == 0 || height == 0 {
            return Err(EmbedError::EmptyImage);
        }
        let mut features = vec![0.0f32; REFERENCE_DIMENSION];
        let (hist, grid) = features.split_at_mut(3 * HIST_BINS);
        let mut cell_sums = [[0.0f64; 3]; (GRID * GRID) as usize];
        let mut cell_counts = [0u64; (GRID * GRID) as usize];
        for (x, y, pixel) in image.enumerate_pixels() {
            let cell = ((y * GRID / height) * GRID + (x * GRID / width)) as usize;
            cell_counts[cell] += 1;
            for (channel, &value) in pixel.0.iter().enumerate() {
                hist[channel * HIST_BINS + (value >> 5) as usize] += 1.0;
                cell_sums[cell][channel] += f64::from(value);
            }
        }
        let n_pixels = (width * height) as f32;
        for bin in hist.iter_mut() {
            *bin /= n_pixels;
        }
        for (cell, sums) in cell_sums.iter().enumerate() {
            if cell_counts[cell] == 0 {
                continue;
            }
            for (channel, &sum) in sums.iter().enumerate() {
                grid[cell * 3 + channel] = (sum / (cell_counts[cell] as f64 * 255.0)) as f32;
            }
        }
        EmbeddingVector::unit(features, Modality::Image)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let collapsed = text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        if collapsed.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let chars: Vec<char> = collapsed.chars().collect();
        let mut features = vec![0.0f32; REFERENCE_DIMENSION];
        if chars.len() < 3 {
            features[trigram_bucket(&chars)] += 1.0;
        } else {
            for gram in chars.windows(3) {
                features[trigram_bucket(gram)] += 1.0;
            }
        }
        EmbeddingVector::unit(features, Modality::Text)
    }
}

fn trigram_bucket(gram: &[char]) -> usize {
    // FNV-1a over the UTF-32 bytes. Spelled out rather than borrowed from
    // std so the bucketing can never change underneath stored embeddings.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &ch in gram {
        for byte in (ch as u32).to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    (hash % REFERENCE_DIMENSION as u64) as usize
}
