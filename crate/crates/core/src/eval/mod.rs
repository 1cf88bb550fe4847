//! Scoring: per-target accuracy against ground truth plus token and cost
//! accounting.
//!
//! Free-text targets (brand, product category) match by normalized
//! substring; everything else must be exactly equal, with both-absent
//! counting as a match. The GTIN target supports three rules of
//! increasing leniency: exact set equality, membership in the class
//! union, and any single correct GTIN.

mod report;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Split};
use crate::domain::{Gtin, Prediction};
use crate::pipeline::ItemRunRecord;

pub use report::{render_comparison, render_cost, render_evaluation, render_scorecard};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("trace references unknown item {0:?}")]
    UnknownItem(String),
    #[error("trace item {0:?} is not in the test split")]
    NotTestItem(String),
    #[error("duplicate trace for item {0:?}")]
    DuplicateTrace(String),
}

/// Which rule decides the GTINs target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtinMetric {
    /// Predicted set equals the ground-truth set.
    ExactSet,
    /// Every predicted GTIN belongs to the class union (and there is at
    /// least one).
    Union,
    /// At least one predicted GTIN is in the ground-truth set.
    Any,
}

impl GtinMetric {
    fn rule(self) -> MatchRule {
        match self {
            GtinMetric::ExactSet => MatchRule::GtinExactSet,
            GtinMetric::Union => MatchRule::GtinUnionMembership,
            GtinMetric::Any => MatchRule::GtinAnyMatch,
        }
    }
}

/// How a target was compared, recorded alongside its score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    Substring,
    Exact,
    GtinExactSet,
    GtinUnionMembership,
    GtinAnyMatch,
}

impl MatchRule {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchRule::Substring => "substring",
            MatchRule::Exact => "exact",
            MatchRule::GtinExactSet => "gtin_exact_set",
            MatchRule::GtinUnionMembership => "gtin_union_membership",
            MatchRule::GtinAnyMatch => "gtin_any_match",
        }
    }
}

/// Scored targets in report order: the product attributes first, then the
/// promotion attributes.
pub const TARGET_NAMES: [&str; 9] = [
    "brand",
    "product_category",
    "product_weight",
    "gtins",
    "different_sorts",
    "price",
    "regular_price",
    "relative_discount",
    "absolute_discount",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetScore {
    pub target: String,
    pub n_correct: usize,
    pub n_total: usize,
    pub rule: MatchRule,
}

impl TargetScore {
    pub fn accuracy(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            self.n_correct as f64 / self.n_total as f64
        }
    }
}

/// Per-target scores for one run, in [`TARGET_NAMES`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetScorecard {
    pub targets: Vec<TargetScore>,
}

impl TargetScorecard {
    pub fn get(&self, target: &str) -> Option<&TargetScore> {
        self.targets.iter().find(|t| t.target == target)
    }

    pub fn accuracy(&self, target: &str) -> Option<f64> {
        self.get(target).map(TargetScore::accuracy)
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// True when the normalized prediction is a substring of any normalized
/// ground-truth value. Normalization lowercases and collapses whitespace;
/// an empty prediction never matches.
pub fn match_substring<S: AsRef<str>>(predicted: &str, gt_values: &[S]) -> bool {
    let needle = normalize(predicted);
    if needle.is_empty() {
        return false;
    }
    gt_values
        .iter()
        .any(|gt| normalize(gt.as_ref()).contains(&needle))
}

/// Plain equality with both-absent counting as a match and one-absent as a
/// mismatch.
pub fn match_exact<T: PartialEq>(predicted: Option<&T>, gt: Option<&T>) -> bool {
    match (predicted, gt) {
        (None, None) => true,
        (Some(p), Some(g)) => p == g,
        _ => false,
    }
}

/// Set equality of the two GTIN lists (order and duplicates ignored).
pub fn match_gtin_exact_set(predicted: &[Gtin], gt: &[Gtin]) -> bool {
    let predicted: BTreeSet<&Gtin> = predicted.iter().collect();
    let gt: BTreeSet<&Gtin> = gt.iter().collect();
    predicted == gt
}

/// True when the prediction is non-empty and every predicted GTIN belongs
/// to the class union. A prediction naming a foreign product must not pass
/// just because it also names a correct one.
pub fn match_gtin_union(predicted: &[Gtin], class_union: &BTreeSet<Gtin>) -> bool {
    !predicted.is_empty() && predicted.iter().all(|gtin| class_union.contains(gtin))
}

/// True when at least one predicted GTIN appears in the ground truth.
pub fn match_gtin_any(predicted: &[Gtin], gt: &[Gtin]) -> bool {
    let gt: HashSet<&Gtin> = gt.iter().collect();
    predicted.iter().any(|gtin| gt.contains(gtin))
}

fn brand_correct(predicted: Option<&str>, gt: Option<&str>) -> bool {
    match (predicted, gt) {
        (None, None) => true,
        (Some(p), Some(g)) => match_substring(p, &[g]),
        _ => false,
    }
}

/// Every predicted category entry must substring-match some ground-truth
/// entry; an empty prediction is only correct against an empty ground
/// truth.
fn category_correct(predicted: &[String], gt: &[String]) -> bool {
    if predicted.is_empty() {
        return gt.is_empty();
    }
    predicted.iter().all(|p| match_substring(p, gt))
}

/// Scores every test item of the dataset. Items without a trace and items
/// whose completion failed count as incorrect on every target; duplicate
/// traces, traces for unknown items, and traces for train items are
/// errors.
pub fn score_run(
    traces: &[ItemRunRecord],
    dataset: &Dataset,
    gtin_metric: GtinMetric,
) -> Result<TargetScorecard, EvalError> {
    let mut by_item: HashMap<&str, &ItemRunRecord> = HashMap::new();
    for trace in traces {
        let item = dataset
            .item(&trace.item_id)
            .ok_or_else(|| EvalError::UnknownItem(trace.item_id.clone()))?;
        if item.split != Split::Test {
            return Err(EvalError::NotTestItem(trace.item_id.clone()));
        }
        if by_item.insert(&trace.item_id, trace).is_some() {
            return Err(EvalError::DuplicateTrace(trace.item_id.clone()));
        }
    }
    let mut n_total = 0usize;
    let mut n_correct = [0usize; TARGET_NAMES.len()];
    for item in dataset.split_items(Split::Test) {
        n_total += 1;
        let Some(prediction) = by_item
            .get(item.item_id.as_str())
            .and_then(|trace| trace.completion.as_ref())
            .map(|completion| &completion.prediction)
        else {
            continue;
        };
        let gt = Prediction::from_records(&item.product, &item.promotion);
        let gtin_ok = match gtin_metric {
            GtinMetric::ExactSet => match_gtin_exact_set(&prediction.gtins, &gt.gtins),
            GtinMetric::Union => {
                let union = dataset
                    .class_gtin_union(&item.label)
                    .expect("ingested item has a label");
                match_gtin_union(&prediction.gtins, union)
            }
            GtinMetric::Any => match_gtin_any(&prediction.gtins, &gt.gtins),
        };
        let weight_ok = match_exact(prediction.weight_number.as_ref(), gt.weight_number.as_ref())
            && match_exact(prediction.weight_unit.as_ref(), gt.weight_unit.as_ref());
        // An omitted different_sorts means the model saw no variety note,
        // which is exactly what ground-truth "unknown" records.
        let sorts_ok = prediction.different_sorts.unwrap_or_default()
            == gt.different_sorts.unwrap_or_default();
        let checks = [
            brand_correct(prediction.brand.as_deref(), gt.brand.as_deref()),
            category_correct(&prediction.product_category, &gt.product_category),
            weight_ok,
            gtin_ok,
            sorts_ok,
            match_exact(prediction.price.as_ref(), gt.price.as_ref()),
            match_exact(prediction.regular_price.as_ref(), gt.regular_price.as_ref()),
            match_exact(
                prediction.relative_discount.as_ref(),
                gt.relative_discount.as_ref(),
            ),
            match_exact(
                prediction.absolute_discount.as_ref(),
                gt.absolute_discount.as_ref(),
            ),
        ];
        for (slot, ok) in n_correct.iter_mut().zip(checks) {
            if ok {
                *slot += 1;
            }
        }
    }
    let targets = TARGET_NAMES
        .iter()
        .zip(n_correct)
        .map(|(&target, n_correct)| {
            let rule = match target {
                "brand" | "product_category" => MatchRule::Substring,
                "gtins" => gtin_metric.rule(),
                _ => MatchRule::Exact,
            };
            TargetScore {
                target: target.to_string(),
                n_correct,
                n_total,
                rule,
            }
        })
        .collect();
    Ok(TargetScorecard { targets })
}

/// Cost of a token, by direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_per_token: f64,
    pub output_per_token: f64,
}

/// Token, latency, and cost aggregates for one run. Averages are taken
/// over traces that produced a completion (failed items spent nothing);
/// `total_cost` sums over everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_traces: usize,
    pub n_completed: usize,
    pub avg_input_tokens: f64,
    pub avg_output_tokens: f64,
    pub avg_total_tokens: f64,
    pub avg_elapsed_seconds: f64,
    pub total_cost: f64,
    pub prices: PriceTable,
}

/// Aggregates token usage (already summed over attempts per trace) and
/// prices it. Prices are configuration and expected to be ≥ 0.
pub fn cost_report(traces: &[ItemRunRecord], prices: PriceTable) -> CostReport {
    let mut input_tokens = 0u64;
    let mut output_tokens = 0u64;
    let mut elapsed = 0.0f64;
    let mut n_completed = 0usize;
    for completion in traces.iter().filter_map(|trace| trace.completion.as_ref()) {
        input_tokens += completion.input_tokens;
        output_tokens += completion.output_tokens;
        elapsed += completion.elapsed_seconds;
        n_completed += 1;
    }
    let avg = |sum: f64| {
        if n_completed == 0 {
            0.0
        } else {
            sum / n_completed as f64
        }
    };
    let avg_input_tokens = avg(input_tokens as f64);
    let avg_output_tokens = avg(output_tokens as f64);
    CostReport {
        n_traces: traces.len(),
        n_completed,
        avg_input_tokens,
        avg_output_tokens,
        avg_total_tokens: avg_input_tokens + avg_output_tokens,
        avg_elapsed_seconds: avg(elapsed),
        total_cost: input_tokens as f64 * prices.input_per_token
            + output_tokens as f64 * prices.output_per_token,
        prices,
    }
}

/// Scorecard and cost report together: what one run achieved and what it
/// spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scorecard: TargetScorecard,
    pub cost: CostReport,
}
