//! Core value types: trade item numbers, exact decimals, product and
//! promotion records, and the structured prediction a model returns.

mod decimal;
mod gtin;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decimal::Decimal;
pub use gtin::{gtin_check_digit, normalize_gtin, Gtin, GTIN_LEN};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("invalid GTIN: {0}")]
    InvalidGtin(String),
    #[error("invalid decimal: {0}")]
    InvalidValue(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// Unit of the package size printed on the product.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WeightUnit {
    Gramm,
    Kilogramm,
    Milliliter,
    Liter,
    Stueck,
    /// Anything else the dataset or a model produces, kept verbatim
    /// (lowercased) so exact matching still works.
    Other(String),
}

impl WeightUnit {
    pub fn parse(raw: &str) -> WeightUnit {
        match raw.trim().to_lowercase().as_str() {
            "gramm" | "g" => WeightUnit::Gramm,
            "kilogramm" | "kg" => WeightUnit::Kilogramm,
            "milliliter" | "ml" => WeightUnit::Milliliter,
            "liter" | "l" => WeightUnit::Liter,
            "stueck" | "stück" => WeightUnit::Stueck,
            other => WeightUnit::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            WeightUnit::Gramm => "Gramm",
            WeightUnit::Kilogramm => "Kilogramm",
            WeightUnit::Milliliter => "Milliliter",
            WeightUnit::Liter => "Liter",
            WeightUnit::Stueck => "Stueck",
            WeightUnit::Other(s) => s,
        }
    }
}

impl fmt::Display for WeightUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for WeightUnit {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for WeightUnit {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<WeightUnit, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Ok(WeightUnit::parse(&raw))
    }
}

/// Package size: an exact number plus its unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weight {
    pub number: Decimal,
    pub unit: WeightUnit,
}

/// Whether the advertisement covers several varieties of the product
/// ("verschiedene Sorten" on German leaflets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferentSorts {
    Yes,
    No,
    #[default]
    Unknown,
}

/// Static catalog facts about one advertised product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProductRecordWire", into = "ProductRecordWire")]
pub struct ProductRecord {
    pub brand: Option<String>,
    pub product_category: Vec<String>,
    pub gtins: Vec<Gtin>,
    pub weight: Option<Weight>,
    pub different_sorts: DifferentSorts,
}

/// Wire shape for [`ProductRecord`]: weight is flattened into the
/// `weight_number` / `weight_unit` pair used by every serialized record.
#[derive(Serialize, Deserialize)]
struct ProductRecordWire {
    brand: Option<String>,
    #[serde(default)]
    product_category: Vec<String>,
    #[serde(rename = "GTINs", default)]
    gtins: Vec<Gtin>,
    weight_number: Option<Decimal>,
    weight_unit: Option<WeightUnit>,
    different_sorts: Option<DifferentSorts>,
}

impl TryFrom<ProductRecordWire> for ProductRecord {
    type Error = DomainError;

    fn try_from(wire: ProductRecordWire) -> Result<ProductRecord, DomainError> {
        if wire.product_category.iter().any(|c| c.trim().is_empty()) {
            return Err(DomainError::InvalidRecord(
                "empty product_category entry".into(),
            ));
        }
        let weight = match (wire.weight_number, wire.weight_unit) {
            (Some(number), Some(unit)) => Some(Weight { number, unit }),
            (Some(_), None) => {
                return Err(DomainError::InvalidRecord(
                    "weight_number given without weight_unit".into(),
                ))
            }
            // A unit without a number carries no information; drop it.
            (None, _) => None,
        };
        Ok(ProductRecord {
            brand: wire.brand,
            product_category: wire.product_category,
            gtins: wire.gtins,
            weight,
            different_sorts: wire.different_sorts.unwrap_or_default(),
        })
    }
}

impl From<ProductRecord> for ProductRecordWire {
    fn from(record: ProductRecord) -> ProductRecordWire {
        let (weight_number, weight_unit) = match record.weight {
            Some(w) => (Some(w.number), Some(w.unit)),
            None => (None, None),
        };
        ProductRecordWire {
            brand: record.brand,
            product_category: record.product_category,
            gtins: record.gtins,
            weight_number,
            weight_unit,
            different_sorts: Some(record.different_sorts),
        }
    }
}

/// Offer terms from the leaflet. All fields are optional: most ads only
/// show a subset, and absence is meaningful during evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromotionRecord {
    pub price: Option<Decimal>,
    pub regular_price: Option<Decimal>,
    pub relative_discount: Option<u32>,
    pub absolute_discount: Option<Decimal>,
}

/// The structured answer a vision-language model returns for one query ad.
///
/// Field names and order are the model-facing schema; `GTINs` keeps its
/// capitalization on the wire. Absent values serialize as JSON `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub brand: Option<String>,
    pub price: Option<Decimal>,
    pub regular_price: Option<Decimal>,
    pub relative_discount: Option<u32>,
    pub absolute_discount: Option<Decimal>,
    #[serde(default)]
    pub product_category: Vec<String>,
    #[serde(rename = "GTINs", default)]
    pub gtins: Vec<Gtin>,
    pub weight_number: Option<Decimal>,
    pub weight_unit: Option<WeightUnit>,
    pub different_sorts: Option<DifferentSorts>,
}

impl Prediction {
    /// True when every field is absent or empty. Models answer this way when
    /// they cannot ground the query in the provided context.
    pub fn is_all_null(&self) -> bool {
        self.brand.is_none()
            && self.price.is_none()
            && self.regular_price.is_none()
            && self.relative_discount.is_none()
            && self.absolute_discount.is_none()
            && self.product_category.is_empty()
            && self.gtins.is_empty()
            && self.weight_number.is_none()
            && self.weight_unit.is_none()
            && self.different_sorts.is_none()
    }

    /// Combines a product and promotion record into the answer shape, used
    /// to render few-shot samples and as ground truth during evaluation.
    pub fn from_records(product: &ProductRecord, promotion: &PromotionRecord) -> Prediction {
        let (weight_number, weight_unit) = match &product.weight {
            Some(w) => (Some(w.number), Some(w.unit.clone())),
            None => (None, None),
        };
        Prediction {
            brand: product.brand.clone(),
            price: promotion.price,
            regular_price: promotion.regular_price,
            relative_discount: promotion.relative_discount,
            absolute_discount: promotion.absolute_discount,
            product_category: product.product_category.clone(),
            gtins: product.gtins.clone(),
            weight_number,
            weight_unit,
            different_sorts: Some(product.different_sorts),
        }
    }

    /// JSON schema for structured model output, mirroring the serde shape.
    pub fn output_schema() -> serde_json::Value {
        let nullable = |ty: &str| serde_json::json!({ "type": [ty, "null"] });
        serde_json::json!({
            "type": "object",
            "properties": {
                "brand": nullable("string"),
                "price": nullable("number"),
                "regular_price": nullable("number"),
                "relative_discount": nullable("integer"),
                "absolute_discount": nullable("number"),
                "product_category": { "type": "array", "items": { "type": "string" } },
                "GTINs": { "type": "array", "items": { "type": "string" } },
                "weight_number": nullable("number"),
                "weight_unit": nullable("string"),
                "different_sorts": { "type": ["string", "null"], "enum": ["yes", "no", "unknown", null] },
            },
            "required": [
                "brand", "price", "regular_price", "relative_discount", "absolute_discount",
                "product_category", "GTINs", "weight_number", "weight_unit", "different_sorts",
            ],
        })
    }
}

/// A fine-grained product class and the union of all GTINs seen on its items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub id: String,
    pub gtin_union: BTreeSet<Gtin>,
}
