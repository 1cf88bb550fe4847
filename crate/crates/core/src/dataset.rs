//! Dataset ingest and lookup.
//!
//! A dataset is described by a JSONL manifest: one advertisement per line
//! with its image path, train/test split, fine-grained class label, and the
//! ground-truth product and promotion records. Image paths are resolved
//! relative to the manifest's directory, so a dataset directory can be moved
//! as a whole.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClassLabel, Gtin, ProductRecord, PromotionRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("manifest line {line}: duplicate item_id {item_id:?}")]
    DuplicateItem { line: usize, item_id: String },
    #[error("manifest line {line}: image {path} does not exist")]
    MissingImage { line: usize, path: PathBuf },
    #[error("manifest {path} contains no items")]
    Empty { path: PathBuf },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One advertisement with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub item_id: String,
    /// Absolute or manifest-relative path, resolved at ingest.
    pub image_path: PathBuf,
    pub split: Split,
    pub label: String,
    pub product: ProductRecord,
    pub promotion: PromotionRecord,
}

#[derive(Deserialize)]
struct ManifestLine {
    item_id: String,
    image_path: PathBuf,
    split: Split,
    label: String,
    product: ProductRecord,
    #[serde(default)]
    promotion: PromotionRecord,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub n_items: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub per_class: BTreeMap<String, SplitCounts>,
}

#[derive(Debug, Default)]
struct LabelEntry {
    /// Indices into `items`, in manifest order.
    train: Vec<usize>,
    test: Vec<usize>,
    gtin_union: BTreeSet<Gtin>,
}

/// An ingested dataset, indexed by item id and by label.
#[derive(Debug, Default)]
pub struct Dataset {
    items: Vec<DatasetItem>,
    by_id: HashMap<String, usize>,
    labels: BTreeMap<String, LabelEntry>,
}

impl Dataset {
    /// Reads a JSONL manifest, validating as it goes: every line must parse,
    /// item ids must be unique, and every referenced image must exist on
    /// disk. Line numbers (1-based) are carried in every error.
    pub fn ingest_manifest(path: &Path) -> Result<Dataset, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut dataset = Dataset::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| IngestError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ManifestLine =
                serde_json::from_str(&line).map_err(|source| IngestError::Malformed {
                    line: line_no,
                    source,
                })?;
            dataset.push_item(parsed, line_no, base)?;
        }
        if dataset.items.is_empty() {
            return Err(IngestError::Empty {
                path: path.to_path_buf(),
            });
        }
        Ok(dataset)
    }

    fn push_item(
        &mut self,
        parsed: ManifestLine,
        line_no: usize,
        base: &Path,
    ) -> Result<(), IngestError> {
        if parsed.item_id.trim().is_empty() {
            return Err(IngestError::Invalid {
                line: line_no,
                message: "empty item_id".into(),
            });
        }
        if parsed.label.trim().is_empty() {
            return Err(IngestError::Invalid {
                line: line_no,
                message: "empty label".into(),
            });
        }
        let image_path = if parsed.image_path.is_absolute() {
            parsed.image_path
        } else {
            base.join(&parsed.image_path)
        };
        if !image_path.is_file() {
            return Err(IngestError::MissingImage {
                line: line_no,
                path: image_path,
            });
        }
        let index = self.items.len();
        if self.by_id.insert(parsed.item_id.clone(), index).is_some() {
            return Err(IngestError::DuplicateItem {
                line: line_no,
                item_id: parsed.item_id,
            });
        }
        let entry = self.labels.entry(parsed.label.clone()).or_default();
        match parsed.split {
            Split::Train => entry.train.push(index),
            Split::Test => entry.test.push(index),
        }
        entry
            .gtin_union
            .extend(parsed.product.gtins.iter().copied());
        self.items.push(DatasetItem {
            item_id: parsed.item_id,
            image_path,
            split: parsed.split,
            label: parsed.label,
            product: parsed.product,
            promotion: parsed.promotion,
        });
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        let mut per_class = BTreeMap::new();
        let mut n_train = 0;
        let mut n_test = 0;
        for (label, entry) in &self.labels {
            n_train += entry.train.len();
            n_test += entry.test.len();
            per_class.insert(
                label.clone(),
                SplitCounts {
                    train: entry.train.len(),
                    test: entry.test.len(),
                },
            );
        }
        DatasetStats {
            n_items: self.items.len(),
            n_train,
            n_test,
            n_classes: self.labels.len(),
            per_class,
        }
    }

    pub fn items(&self) -> impl Iterator<Item = &DatasetItem> {
        self.items.iter()
    }

    pub fn split_items(&self, split: Split) -> impl Iterator<Item = &DatasetItem> {
        self.items.iter().filter(move |item| item.split == split)
    }

    pub fn item(&self, item_id: &str) -> Option<&DatasetItem> {
        self.by_id.get(item_id).map(|&i| &self.items[i])
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    /// Train items of `label`, with the ids named in `order` first (in that
    /// order) and the rest following in manifest order. Ids in `order` that
    /// are not train items of this label are ignored; duplicates keep their
    /// first position. The result always covers the label's full train set.
    pub fn relational_query(
        &self,
        label: &str,
        order: &[String],
    ) -> Result<Vec<&DatasetItem>, DatasetError> {
        let entry = self
            .labels
            .get(label)
            .ok_or_else(|| DatasetError::UnknownLabel(label.to_string()))?;
        let train_set: HashSet<usize> = entry.train.iter().copied().collect();
        let mut seen: HashSet<usize> = HashSet::new();
        let mut result: Vec<&DatasetItem> = Vec::with_capacity(entry.train.len());
        for id in order {
            if let Some(&idx) = self.by_id.get(id) {
                if train_set.contains(&idx) && seen.insert(idx) {
                    result.push(&self.items[idx]);
                }
            }
        }
        for &idx in &entry.train {
            if seen.insert(idx) {
                result.push(&self.items[idx]);
            }
        }
        Ok(result)
    }

    /// Union of all GTINs that appear on any item of `label`, both splits.
    pub fn class_gtin_union(&self, label: &str) -> Result<&BTreeSet<Gtin>, DatasetError> {
        self.labels
            .get(label)
            .map(|entry| &entry.gtin_union)
            .ok_or_else(|| DatasetError::UnknownLabel(label.to_string()))
    }

    pub fn class_label(&self, label: &str) -> Result<ClassLabel, DatasetError> {
        self.class_gtin_union(label).map(|union| ClassLabel {
            id: label.to_string(),
            gtin_union: union.clone(),
        })
    }

    /// Ground truth for one test item as the model is expected to answer it.
    pub fn ground_truth(&self, item_id: &str) -> Result<crate::domain::Prediction, DatasetError> {
        let item = self
            .item(item_id)
            .ok_or_else(|| DatasetError::UnknownItem(item_id.to_string()))?;
        Ok(crate::domain::Prediction::from_records(
            &item.product,
            &item.promotion,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{normalize_gtin, DifferentSorts};
    use std::io::Write;

    /// Writes a manifest with one shared 1x1 PNG for every referenced image.
    fn write_manifest(dir: &Path, lines: &[serde_json::Value]) -> PathBuf {
        let img = image::RgbImage::from_pixel(1, 1, image::Rgb([0, 0, 0]));
        img.save(dir.join("img.png")).unwrap();
        let path = dir.join("manifest.jsonl");
        let mut f = File::create(&path).unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        path
    }

    fn line(item_id: &str, split: &str, label: &str) -> serde_json::Value {
        serde_json::json!({
            "item_id": item_id,
            "image_path": "img.png",
            "split": split,
            "label": label,
            "product": { "brand": "B", "product_category": [label], "GTINs": [] },
            "promotion": { "price": 0.99 }
        })
    }

    #[test]
    fn ingests_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(
            dir.path(),
            &[
                line("a1", "train", "apple"),
                line("a2", "train", "apple"),
                line("a3", "test", "apple"),
                line("b1", "train", "pear"),
            ],
        );
        let ds = Dataset::ingest_manifest(&manifest).unwrap();
        let stats = ds.stats();
        assert_eq!(stats.n_items, 4);
        assert_eq!(stats.n_train, 3);
        assert_eq!(stats.n_test, 1);
        assert_eq!(stats.n_classes, 2);
        assert_eq!(stats.per_class["apple"], SplitCounts { train: 2, test: 1 });
        assert_eq!(ds.item("a3").unwrap().split, Split::Test);
        assert!(ds.item("a3").unwrap().image_path.is_file());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{}", line("a1", "train", "apple")).unwrap();
        writeln!(f, "this is not json").unwrap();
        let img = image::RgbImage::from_pixel(1, 1, image::Rgb([0, 0, 0]));
        img.save(dir.path().join("img.png")).unwrap();
        let err = Dataset::ingest_manifest(&path).unwrap_err();
        assert!(
            matches!(err, IngestError::Malformed { line: 2, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_item_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(
            dir.path(),
            &[line("a1", "train", "apple"), line("a1", "test", "apple")],
        );
        let err = Dataset::ingest_manifest(&manifest).unwrap_err();
        assert!(
            matches!(err, IngestError::DuplicateItem { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_image_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = line("a1", "train", "apple");
        bad["image_path"] = "nope.png".into();
        let manifest = write_manifest(dir.path(), &[bad]);
        let err = Dataset::ingest_manifest(&manifest).unwrap_err();
        assert!(
            matches!(err, IngestError::MissingImage { line: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        File::create(&path).unwrap();
        assert!(matches!(
            Dataset::ingest_manifest(&path),
            Err(IngestError::Empty { .. })
        ));
    }

    #[test]
    fn relational_query_orders_prefix_then_manifest_order() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(
            dir.path(),
            &[
                line("a1", "train", "apple"),
                line("a2", "train", "apple"),
                line("a3", "train", "apple"),
                line("a4", "test", "apple"),
                line("b1", "train", "pear"),
            ],
        );
        let ds = Dataset::ingest_manifest(&manifest).unwrap();

        // Preferred ids first, remainder in manifest order, test items and
        // other labels' items ignored.
        let order = vec!["a3".to_string(), "a4".to_string(), "b1".to_string()];
        let got: Vec<&str> = ds
            .relational_query("apple", &order)
            .unwrap()
            .iter()
            .map(|i| i.item_id.as_str())
            .collect();
        assert_eq!(got, vec!["a3", "a1", "a2"]);

        // No preferences: pure manifest order.
        let got: Vec<&str> = ds
            .relational_query("apple", &[])
            .unwrap()
            .iter()
            .map(|i| i.item_id.as_str())
            .collect();
        assert_eq!(got, vec!["a1", "a2", "a3"]);

        // Duplicate preferences keep their first position.
        let order = vec!["a2".to_string(), "a2".to_string()];
        let got: Vec<&str> = ds
            .relational_query("apple", &order)
            .unwrap()
            .iter()
            .map(|i| i.item_id.as_str())
            .collect();
        assert_eq!(got, vec!["a2", "a1", "a3"]);

        assert_eq!(
            ds.relational_query("plum", &[]).unwrap_err(),
            DatasetError::UnknownLabel("plum".into())
        );
    }

    #[test]
    fn gtin_union_spans_both_splits() {
        let dir = tempfile::tempdir().unwrap();
        let mut l1 = line("a1", "train", "apple");
        l1["product"]["GTINs"] = serde_json::json!(["04018077683015"]);
        let mut l2 = line("a2", "test", "apple");
        l2["product"]["GTINs"] = serde_json::json!(["04018077686719", "04018077683015"]);
        let manifest = write_manifest(dir.path(), &[l1, l2]);
        let ds = Dataset::ingest_manifest(&manifest).unwrap();
        let union = ds.class_gtin_union("apple").unwrap();
        assert_eq!(union.len(), 2);
        assert!(union.contains(&normalize_gtin("04018077683015").unwrap()));
        assert!(union.contains(&normalize_gtin("04018077686719").unwrap()));
        let class = ds.class_label("apple").unwrap();
        assert_eq!(class.id, "apple");
        assert_eq!(class.gtin_union.len(), 2);
    }

    #[test]
    fn ground_truth_combines_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut l = line("a1", "test", "apple");
        l["product"]["different_sorts"] = "no".into();
        let manifest = write_manifest(dir.path(), &[l]);
        let ds = Dataset::ingest_manifest(&manifest).unwrap();
        let gt = ds.ground_truth("a1").unwrap();
        assert_eq!(gt.brand.as_deref(), Some("B"));
        assert_eq!(gt.price, Some("0.99".parse().unwrap()));
        assert_eq!(gt.different_sorts, Some(DifferentSorts::No));
        assert_eq!(gt.product_category, vec!["apple".to_string()]);
        assert!(ds.ground_truth("zz").is_err());
    }

    /// Ingest at the scale of a full leaflet dataset: 367 classes with ten
    /// train and three test ads each.
    #[test]
    fn full_scale_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let mut lines = Vec::new();
        for class in 0..367 {
            let label = format!("class-{class:03}");
            for t in 0..10 {
                lines.push(line(&format!("c{class}t{t}"), "train", &label));
            }
            for t in 0..3 {
                lines.push(line(&format!("c{class}q{t}"), "test", &label));
            }
        }
        let manifest = write_manifest(dir.path(), &lines);
        let ds = Dataset::ingest_manifest(&manifest).unwrap();
        let stats = ds.stats();
        assert_eq!(stats.n_items, 4771);
        assert_eq!(stats.n_train, 3670);
        assert_eq!(stats.n_test, 1101);
        assert_eq!(stats.n_classes, 367);
        assert!(stats
            .per_class
            .values()
            .all(|c| c.train == 10 && c.test == 3));
    }
}
