//! `leafrag` — retrieval-augmented extraction over retail leaflet images.
//!
//! The binary wires the library's pipeline to files on disk: `ingest`
//! checks a manifest, `index` builds and snapshots the vector store,
//! `run` classifies and extracts every test item into a JSONL trace
//! file, `evaluate` scores a trace file, and `report` compares several
//! evaluations side by side.

mod config;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Parser, Subcommand};
use leafrag_core::eval::{render_comparison, render_evaluation};
use leafrag_core::{
    cost_report, index_items, run_batch, score_run, Dataset, DatasetItem, Evaluation,
    ItemRunRecord, Modality, Split, VectorStore,
};

use crate::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "leafrag",
    version,
    about = "Retrieval-augmented extraction over retail leaflet images"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Load a dataset manifest and print its statistics
    Ingest {
        #[command(flatten)]
        overrides: Overrides,
        /// Print the statistics as JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// Embed every train item and write a vector-store snapshot
    Index {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Classify and extract every test item, appending JSONL traces
    Run {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a trace file against the manifest's ground truth
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
        /// Write the evaluation as JSON to this file
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Print JSON instead of the text report
        #[arg(long)]
        json: bool,
    },
    /// Compare scorecards from several evaluation JSON files
    Report {
        /// Evaluation files written by `evaluate --output`
        #[arg(required = true, value_name = "FILE")]
        evaluations: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Commands::Ingest { overrides, json } => cmd_ingest(&overrides, json),
        Commands::Index { overrides } => cmd_index(&overrides),
        Commands::Run { overrides } => cmd_run(&overrides),
        Commands::Evaluate {
            overrides,
            output,
            json,
        } => cmd_evaluate(&overrides, output.as_deref(), json),
        Commands::Report { evaluations } => cmd_report(&evaluations),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // A reader that stopped consuming our output (`leafrag ... | head`)
        // is not an error.
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:?}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn cmd_ingest(overrides: &Overrides, json: bool) -> Result<()> {
    let config = RunConfig::load(overrides)?;
    let dataset = load_dataset(&config)?;
    let stats = dataset.stats();
    let mut out = std::io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&stats)?)?;
    } else {
        writeln!(
            out,
            "{} items ({} train / {} test), {} classes",
            stats.n_items, stats.n_train, stats.n_test, stats.n_classes
        )?;
    }
    Ok(())
}

fn cmd_index(overrides: &Overrides) -> Result<()> {
    let config = RunConfig::load(overrides)?;
    let snapshot_path = config.require_snapshot()?;
    let dataset = load_dataset(&config)?;
    let clients = config.build_clients()?;
    let pipeline = config.pipeline_config();

    let train: Vec<&DatasetItem> = dataset.split_items(Split::Train).collect();
    let mut store = VectorStore::new();
    let outcomes = index_items(
        &train,
        &mut store,
        clients.run_clients(),
        &pipeline,
        config.workers,
    );
    for outcome in &outcomes {
        if let Some(error) = &outcome.error {
            eprintln!("warning: {}: {error}", outcome.item_id);
        }
    }
    ensure!(!train.is_empty(), "manifest has no train items to index");
    let indexed = outcomes.iter().filter(|o| o.image_indexed).count();
    ensure!(
        indexed > 0,
        "no items indexed: all {} train items failed",
        train.len()
    );

    ensure_parent_dir(snapshot_path)?;
    store
        .snapshot(snapshot_path)
        .with_context(|| format!("cannot write snapshot {}", snapshot_path.display()))?;
    writeln!(
        std::io::stdout().lock(),
        "indexed {indexed} of {} train items ({} image + {} text embeddings) -> {}",
        train.len(),
        store.modality_count(Modality::Image),
        store.modality_count(Modality::Text),
        snapshot_path.display()
    )?;
    Ok(())
}

fn cmd_run(overrides: &Overrides) -> Result<()> {
    let config = RunConfig::load(overrides)?;
    let snapshot_path = config.require_snapshot()?;
    let traces_path = config.require_traces()?;
    let dataset = load_dataset(&config)?;
    let clients = config.build_clients()?;
    let pipeline = config.pipeline_config();

    let store = VectorStore::restore(snapshot_path)
        .with_context(|| format!("cannot restore snapshot {}", snapshot_path.display()))?;
    let done = completed_item_ids(traces_path)?;
    let remaining: Vec<&DatasetItem> = dataset
        .split_items(Split::Test)
        .filter(|item| !done.contains(&item.item_id))
        .collect();

    ensure_parent_dir(traces_path)?;
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(traces_path)
        .with_context(|| format!("cannot open trace file {}", traces_path.display()))?;
    let mut writer = std::io::BufWriter::new(file);

    // Chunked so a long run flushes complete records as it goes (an
    // interrupted run resumes from what was written) while each chunk
    // still runs on the full worker pool in manifest order.
    let mut n_errors = 0;
    for chunk in remaining.chunks(config.workers.max(1) * 4) {
        let records = run_batch(
            chunk,
            &store,
            &dataset,
            clients.run_clients(),
            &pipeline,
            config.workers,
        );
        for record in &records {
            if record.error.is_some() {
                n_errors += 1;
            }
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
    }
    writeln!(
        std::io::stdout().lock(),
        "ran {} items ({} already in trace file, {} with errors) -> {}",
        remaining.len(),
        done.len(),
        n_errors,
        traces_path.display()
    )?;
    Ok(())
}

fn cmd_evaluate(overrides: &Overrides, output: Option<&Path>, json: bool) -> Result<()> {
    let config = RunConfig::load(overrides)?;
    let traces_path = config.require_traces()?;
    let dataset = load_dataset(&config)?;
    let records = read_traces(traces_path)?;

    let scorecard = score_run(&records, &dataset, config.gtin_metric)?;
    let cost = cost_report(&records, config.prices);
    let evaluation = Evaluation { scorecard, cost };

    let rendered = serde_json::to_string_pretty(&evaluation)?;
    if let Some(path) = output {
        ensure_parent_dir(path)?;
        fs::write(path, format!("{rendered}\n"))
            .with_context(|| format!("cannot write evaluation {}", path.display()))?;
    }
    let mut out = std::io::stdout().lock();
    if json {
        writeln!(out, "{rendered}")?;
    } else {
        write!(out, "{}", render_evaluation(&evaluation))?;
    }
    Ok(())
}

fn cmd_report(evaluations: &[PathBuf]) -> Result<()> {
    let mut runs = Vec::new();
    for path in evaluations {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("cannot read evaluation {}", path.display()))?;
        let evaluation: Evaluation = serde_json::from_str(&raw)
            .with_context(|| format!("invalid evaluation {}", path.display()))?;
        let name = path
            .file_stem()
            .map(|stem| stem.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        runs.push((name, evaluation.scorecard));
    }
    write!(std::io::stdout().lock(), "{}", render_comparison(&runs))?;
    Ok(())
}

fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let path = config.require_manifest()?;
    Ok(Dataset::ingest_manifest(path)?)
}

/// Item ids already present in the trace file, so a rerun skips them.
fn completed_item_ids(path: &Path) -> Result<HashSet<String>> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    Ok(read_traces(path)?
        .into_iter()
        .map(|record| record.item_id)
        .collect())
}

fn read_traces(path: &Path) -> Result<Vec<ItemRunRecord>> {
    let raw = fs::read_to_string(path)
        .with_context(|| format!("cannot read trace file {}", path.display()))?;
    let mut records = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ItemRunRecord = serde_json::from_str(line).with_context(|| {
            format!(
                "trace file {} line {}: not a run record",
                path.display(),
                idx + 1
            )
        })?;
        records.push(record);
    }
    Ok(records)
}

fn ensure_parent_dir(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create directory {}", parent.display()))?;
        }
    }
    Ok(())
}
