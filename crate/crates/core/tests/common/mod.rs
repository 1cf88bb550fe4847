//! Helpers shared by the integration tests: the closed-loop fixture (a
//! tiny four-class dataset of synthetic leaflet crops with a scripted
//! model) and an index builder over its train split.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use leafrag_core::dataset::Split;
use leafrag_core::pipeline::{index_items, IndexOutcome, PipelineConfig, RunClients};
use leafrag_core::vlm::{ScriptEntry, ScriptedVlm};
use leafrag_core::{Dataset, ReferenceEmbedder, StubSegmenter, VectorStore};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/closed_loop")
}

pub fn load_fixture_dataset() -> Dataset {
    Dataset::ingest_manifest(&fixture_dir().join("manifest.jsonl")).expect("fixture manifest")
}

pub fn scripted_vlm() -> ScriptedVlm {
    ScriptedVlm::from_script_file(&fixture_dir().join("vlm_script.json")).expect("fixture script")
}

/// The raw script entries, for tests that want to tweak them (e.g. forcing
/// the all-null retry) before building a [`ScriptedVlm`].
pub fn script_entries() -> HashMap<String, ScriptEntry> {
    let raw = std::fs::read_to_string(fixture_dir().join("vlm_script.json")).expect("script file");
    serde_json::from_str(&raw).expect("script entries")
}

/// Indexes the fixture's train split with the reference embedder, the stub
/// segmenter and the given model client.
pub fn build_index(
    dataset: &Dataset,
    embedder: &ReferenceEmbedder,
    vlm: &dyn leafrag_core::VlmClient,
) -> (VectorStore, Vec<IndexOutcome>) {
    let segmenter = StubSegmenter::new();
    let clients = RunClients {
        segmenter: &segmenter,
        embedder,
        vlm,
    };
    let train: Vec<_> = dataset.split_items(Split::Train).collect();
    let mut store = VectorStore::new();
    let outcomes = index_items(&train, &mut store, clients, &PipelineConfig::default(), 2);
    (store, outcomes)
}
