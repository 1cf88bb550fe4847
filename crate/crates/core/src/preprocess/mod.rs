//! Image preprocessing: segment the advertised product, crop it for the
//! image embedding, demask it to leave the printed text, and extract a
//! product description from the demasked image via a VLM call.

mod remote;

use std::io::Cursor;
use std::path::Path;

use base64::Engine;
use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::vlm::{Message, Part, Role, VlmClient, VlmRequest};

pub use remote::RemoteSegmenter;

/// Segmentation prompt describing what to mask.
pub const DEFAULT_SEGMENT_PROMPT: &str = "product.";

/// System message for the description-extraction call, sent verbatim.
pub const DESCRIPTION_SYSTEM_PROMPT: &str =
    "You are an AI assistant that extract text from an image";

/// Task text for the description-extraction call, sent verbatim.
pub const DESCRIPTION_TASK_PROMPT: &str = "First, extract the text. Second, remove all price \
information. If available, remove all special / detailed description of the product";

/// Masked-out pixels are filled with white, approximating the leaflet
/// background.
const FILL: Rgb<u8> = Rgb([255, 255, 255]);

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("segmentation failed: {0}")]
    Segmentation(String),
    #[error("segmentation mask is empty")]
    EmptyMask,
    #[error("description extraction failed: {0}")]
    Extraction(String),
    #[error("cannot load image {path}: {message}")]
    Image {
        path: std::path::PathBuf,
        message: String,
    },
}

/// A per-pixel boolean mask over a source image, remembering the prompt
/// that produced it. An all-false mask is representable: segmentation can
/// genuinely find nothing, and callers degrade rather than crash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    bitmap: Vec<bool>,
    prompt: String,
}

impl SegmentationMask {
    pub fn new(
        width: u32,
        height: u32,
        bitmap: Vec<bool>,
        prompt: impl Into<String>,
    ) -> Result<SegmentationMask, PreprocessError> {
        if bitmap.len() != (width as usize) * (height as usize) {
            return Err(PreprocessError::Segmentation(format!(
                "bitmap has {} entries for a {width}x{height} mask",
                bitmap.len()
            )));
        }
        Ok(SegmentationMask {
            width,
            height,
            bitmap,
            prompt: prompt.into(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bitmap[(y as usize) * (self.width as usize) + (x as usize)]
    }

    pub fn is_empty(&self) -> bool {
        !self.bitmap.iter().any(|&b| b)
    }

    pub fn coverage(&self) -> usize {
        self.bitmap.iter().filter(|&&b| b).count()
    }

    /// Tight bounding box of the true region as `(x, y, width, height)`,
    /// or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut min_x, mut min_y) = (u32::MAX, u32::MAX);
        let (mut max_x, mut max_y) = (0u32, 0u32);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    min_x = min_x.min(x);
                    min_y = min_y.min(y);
                    max_x = max_x.max(x);
                    max_y = max_y.max(y);
                }
            }
        }
        any.then(|| (min_x, min_y, max_x - min_x + 1, max_y - min_y + 1))
    }

    /// Decodes a run-length encoding: space-separated run lengths in
    /// row-major order, alternating false/true and starting with false.
    /// `"0 6 3"` is six true pixels followed by three false ones.
    pub fn from_rle(
        rle: &str,
        width: u32,
        height: u32,
        prompt: impl Into<String>,
    ) -> Result<SegmentationMask, PreprocessError> {
        let expected = (width as usize) * (height as usize);
        let mut bitmap = Vec::with_capacity(expected);
        let mut value = false;
        for token in rle.split_whitespace() {
            let run: usize = token
                .parse()
                .map_err(|_| PreprocessError::Segmentation(format!("bad RLE token {token:?}")))?;
            if bitmap.len() + run > expected {
                return Err(PreprocessError::Segmentation(format!(
                    "RLE overruns {width}x{height} mask"
                )));
            }
            bitmap.extend(std::iter::repeat_n(value, run));
            value = !value;
        }
        if bitmap.len() != expected {
            return Err(PreprocessError::Segmentation(format!(
                "RLE covers {} of {expected} pixels",
                bitmap.len()
            )));
        }
        SegmentationMask::new(width, height, bitmap, prompt)
    }

    pub fn to_rle(&self) -> String {
        let mut runs: Vec<usize> = Vec::new();
        let mut value = false;
        let mut run = 0usize;
        for &bit in &self.bitmap {
            if bit == value {
                run += 1;
            } else {
                runs.push(run);
                value = bit;
                run = 1;
            }
        }
        runs.push(run);
        runs.iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Produces a mask for the region described by `prompt`.
pub trait Segmenter: Send + Sync {
    fn segment(&self, image: &RgbImage, prompt: &str) -> Result<SegmentationMask, PreprocessError>;
}

/// Deterministic offline segmenter: a centered rectangle covering 60% of
/// each dimension. Enough to exercise crop/demask geometry without a model.
#[derive(Debug, Default, Clone, Copy)]
pub struct StubSegmenter;

impl StubSegmenter {
    pub fn new() -> StubSegmenter {
        StubSegmenter
    }
}

impl Segmenter for StubSegmenter {
    fn segment(&self, image: &RgbImage, prompt: &str) -> Result<SegmentationMask, PreprocessError> {
        let (width, height) = image.dimensions();
        if width == 0 || height == 0 {
            return Err(PreprocessError::Segmentation("empty image".into()));
        }
        let box_w = (width * 6 / 10).max(1);
        let box_h = (height * 6 / 10).max(1);
        let x0 = (width - box_w) / 2;
        let y0 = (height - box_h) / 2;
        let mut bitmap = vec![false; (width as usize) * (height as usize)];
        for y in y0..y0 + box_h {
            for x in x0..x0 + box_w {
                bitmap[(y as usize) * (width as usize) + (x as usize)] = true;
            }
        }
        SegmentationMask::new(width, height, bitmap, prompt)
    }
}

/// Clips the image to the mask's tight bounding box; pixels inside the box
/// but outside the mask are filled.
pub fn crop_product(
    image: &RgbImage,
    mask: &SegmentationMask,
) -> Result<RgbImage, PreprocessError> {
    check_dimensions(image, mask)?;
    let (x0, y0, box_w, box_h) = mask.bounding_box().ok_or(PreprocessError::EmptyMask)?;
    let mut crop = RgbImage::new(box_w, box_h);
    for y in 0..box_h {
        for x in 0..box_w {
            let pixel = if mask.get(x0 + x, y0 + y) {
                *image.get_pixel(x0 + x, y0 + y)
            } else {
                FILL
            };
            crop.put_pixel(x, y, pixel);
        }
    }
    Ok(crop)
}

/// Same-size image with the mask region filled; the complement of the crop.
/// An empty mask returns the image unchanged.
pub fn demask(image: &RgbImage, mask: &SegmentationMask) -> Result<RgbImage, PreprocessError> {
    check_dimensions(image, mask)?;
    let mut output = image.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                output.put_pixel(x, y, FILL);
            }
        }
    }
    Ok(output)
}

fn check_dimensions(image: &RgbImage, mask: &SegmentationMask) -> Result<(), PreprocessError> {
    if image.dimensions() != (mask.width(), mask.height()) {
        return Err(PreprocessError::Segmentation(format!(
            "mask is {}x{} but image is {}x{}",
            mask.width(),
            mask.height(),
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Asks the VLM to read the product description off a demasked image,
/// using the fixed system and task prompts. `item_id` keys scripted mocks;
/// remote clients ignore it.
pub fn extract_description(
    demasked: &RgbImage,
    client: &dyn VlmClient,
    item_id: Option<&str>,
) -> Result<String, PreprocessError> {
    let data = png_base64(demasked).map_err(PreprocessError::Extraction)?;
    let request = VlmRequest {
        messages: vec![
            Message {
                role: Role::System,
                parts: vec![Part::text(DESCRIPTION_SYSTEM_PROMPT)],
            },
            Message {
                role: Role::User,
                parts: vec![Part::image(data), Part::text(DESCRIPTION_TASK_PROMPT)],
            },
        ],
        schema: None,
        query_item_id: item_id.map(str::to_string),
    };
    let response = client
        .complete(&request)
        .map_err(|e| PreprocessError::Extraction(e.to_string()))?;
    response
        .text()
        .map(str::to_string)
        .ok_or_else(|| PreprocessError::Extraction("response carries no text field".into()))
}

pub fn load_image(path: &Path) -> Result<RgbImage, PreprocessError> {
    let image = image::open(path).map_err(|e| PreprocessError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(image.to_rgb8())
}

/// PNG-encodes an image and base64s it for wire transport.
pub(crate) fn png_base64(image: &RgbImage) -> Result<String, String> {
    let mut png = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| format!("PNG encoding failed: {e}"))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(png))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlm::{ScriptEntry, ScriptedVlm, TokenUsage, VlmError, VlmResponse};

    fn gradient(width: u32, height: u32) -> RgbImage {
        RgbImage::from_fn(width, height, |x, y| {
            Rgb([
                (x * 7 % 256) as u8,
                (y * 11 % 256) as u8,
                ((x + y) % 256) as u8,
            ])
        })
    }

    #[test]
    fn stub_masks_a_centered_rectangle() {
        let image = gradient(100, 50);
        let mask = StubSegmenter::new()
            .segment(&image, DEFAULT_SEGMENT_PROMPT)
            .unwrap();
        assert_eq!((mask.width(), mask.height()), (100, 50));
        assert_eq!(mask.prompt(), "product.");
        assert_eq!(mask.bounding_box(), Some((20, 10, 60, 30)));
        assert_eq!(mask.coverage(), 60 * 30);
    }

    #[test]
    fn stub_handles_tiny_images() {
        let image = gradient(1, 1);
        let mask = StubSegmenter::new().segment(&image, "product.").unwrap();
        assert!(!mask.is_empty());
        assert_eq!(mask.bounding_box(), Some((0, 0, 1, 1)));
    }

    #[test]
    fn crop_clips_to_bounding_box() {
        let image = gradient(100, 50);
        let mask = StubSegmenter::new().segment(&image, "product.").unwrap();
        let crop = crop_product(&image, &mask).unwrap();
        assert_eq!(crop.dimensions(), (60, 30));
        assert_eq!(crop.get_pixel(0, 0), image.get_pixel(20, 10));
    }

    #[test]
    fn crop_of_full_mask_is_the_original() {
        let image = gradient(8, 8);
        let mask = SegmentationMask::new(8, 8, vec![true; 64], "product.").unwrap();
        assert_eq!(crop_product(&image, &mask).unwrap(), image);
    }

    #[test]
    fn crop_of_empty_mask_is_an_error() {
        let image = gradient(8, 8);
        let mask = SegmentationMask::new(8, 8, vec![false; 64], "product.").unwrap();
        assert!(matches!(
            crop_product(&image, &mask),
            Err(PreprocessError::EmptyMask)
        ));
    }

    #[test]
    fn demask_fills_mask_and_keeps_the_rest() {
        let image = gradient(10, 10);
        let mask = StubSegmenter::new().segment(&image, "product.").unwrap();
        let output = demask(&image, &mask).unwrap();
        assert_eq!(output.dimensions(), image.dimensions());
        let (x0, y0, w, h) = mask.bounding_box().unwrap();
        assert_eq!(*output.get_pixel(x0, y0), FILL);
        assert_eq!(*output.get_pixel(x0 + w - 1, y0 + h - 1), FILL);
        assert_eq!(output.get_pixel(0, 0), image.get_pixel(0, 0));
    }

    #[test]
    fn demask_of_empty_mask_is_identity_and_full_mask_is_blank() {
        let image = gradient(6, 4);
        let empty = SegmentationMask::new(6, 4, vec![false; 24], "product.").unwrap();
        assert_eq!(demask(&image, &empty).unwrap(), image);
        let full = SegmentationMask::new(6, 4, vec![true; 24], "product.").unwrap();
        let blank = demask(&image, &full).unwrap();
        assert!(blank.pixels().all(|&p| p == FILL));
    }

    #[test]
    fn demask_then_crop_yields_uniform_fill() {
        let image = gradient(20, 20);
        let mask = StubSegmenter::new().segment(&image, "product.").unwrap();
        let demasked = demask(&image, &mask).unwrap();
        let crop = crop_product(&demasked, &mask).unwrap();
        assert!(crop.pixels().all(|&p| p == FILL));
    }

    /// Every source pixel lands in exactly one output: masked pixels keep
    /// their color in the crop (and are filled in the demask), unmasked
    /// pixels keep their color in the demask (and are absent or filled in
    /// the crop).
    #[test]
    fn crop_and_demask_partition_pixels() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (w, h) = (rng.random_range(2..20u32), rng.random_range(2..20u32));
            let image = gradient(w, h);
            let bitmap: Vec<bool> = (0..(w * h)).map(|_| rng.random_bool(0.4)).collect();
            let mask = SegmentationMask::new(w, h, bitmap, "product.").unwrap();
            if mask.is_empty() {
                continue;
            }
            let crop = crop_product(&image, &mask).unwrap();
            let demasked = demask(&image, &mask).unwrap();
            let (x0, y0, bw, bh) = mask.bounding_box().unwrap();
            for y in 0..h {
                for x in 0..w {
                    let source = *image.get_pixel(x, y);
                    if mask.get(x, y) {
                        assert_eq!(*crop.get_pixel(x - x0, y - y0), source);
                        assert_eq!(*demasked.get_pixel(x, y), FILL);
                    } else {
                        assert_eq!(*demasked.get_pixel(x, y), source);
                        let in_box = x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh;
                        if in_box {
                            assert_eq!(*crop.get_pixel(x - x0, y - y0), FILL);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mask_dimension_mismatch_is_rejected() {
        let image = gradient(4, 4);
        let mask = SegmentationMask::new(5, 5, vec![true; 25], "product.").unwrap();
        assert!(matches!(
            crop_product(&image, &mask),
            Err(PreprocessError::Segmentation(_))
        ));
        assert!(matches!(
            demask(&image, &mask),
            Err(PreprocessError::Segmentation(_))
        ));
    }

    #[test]
    fn rle_round_trips() {
        let mask = StubSegmenter::new()
            .segment(&gradient(9, 7), "product.")
            .unwrap();
        let rle = mask.to_rle();
        let back = SegmentationMask::from_rle(&rle, 9, 7, "product.").unwrap();
        assert_eq!(back, mask);

        // Leading true run needs an explicit zero-length false run.
        let all_true = SegmentationMask::new(2, 2, vec![true; 4], "p").unwrap();
        assert_eq!(all_true.to_rle(), "0 4");
        assert_eq!(
            SegmentationMask::from_rle("0 4", 2, 2, "p").unwrap(),
            all_true
        );
    }

    #[test]
    fn rle_rejects_bad_input() {
        assert!(SegmentationMask::from_rle("1 2", 2, 2, "p").is_err());
        assert!(SegmentationMask::from_rle("1 2 3 4", 2, 2, "p").is_err());
        assert!(SegmentationMask::from_rle("abc", 2, 2, "p").is_err());
    }

    #[test]
    fn extraction_passes_text_through() {
        let mut entries = std::collections::HashMap::new();
        entries.insert(
            "t1".to_string(),
            ScriptEntry {
                description: Some("Lorenz Saltletts".into()),
                ..Default::default()
            },
        );
        let vlm = ScriptedVlm::new(entries);
        let text = extract_description(&gradient(4, 4), &vlm, Some("t1")).unwrap();
        assert_eq!(text, "Lorenz Saltletts");
    }

    #[test]
    fn extraction_failure_is_reported() {
        let vlm = ScriptedVlm::new(Default::default());
        let err = extract_description(&gradient(4, 4), &vlm, Some("t1")).unwrap_err();
        assert!(matches!(err, PreprocessError::Extraction(_)));
    }

    /// The outgoing extraction request must contain both fixed prompt
    /// strings verbatim.
    #[test]
    fn extraction_request_carries_the_exact_prompts() {
        struct Auditing;
        impl VlmClient for Auditing {
            fn complete(&self, request: &VlmRequest) -> Result<VlmResponse, VlmError> {
                let system_texts: Vec<&str> = request
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .flat_map(|m| &m.parts)
                    .filter_map(Part::as_text)
                    .collect();
                assert_eq!(
                    system_texts,
                    vec!["You are an AI assistant that extract text from an image"]
                );
                let user_texts: Vec<&str> = request
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::User)
                    .flat_map(|m| &m.parts)
                    .filter_map(Part::as_text)
                    .collect();
                assert_eq!(
                    user_texts,
                    vec![
                        "First, extract the text. Second, remove all price information. If \
                         available, remove all special / detailed description of the product"
                    ]
                );
                assert_eq!(request.user_image_parts(), 1);
                assert!(request.schema.is_none());
                Ok(VlmResponse {
                    content: serde_json::json!({ "text": "ok" }),
                    usage: TokenUsage::default(),
                })
            }
        }
        assert_eq!(
            extract_description(&gradient(4, 4), &Auditing, None).unwrap(),
            "ok"
        );
    }
}
