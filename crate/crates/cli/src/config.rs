//! Run configuration: a JSON file merged with command-line overrides.
//!
//! Everything a command needs lives in one `RunConfig` so a run is
//! reproducible from a single file. Flags override file values; API keys
//! are read from the environment only, so config files stay safe to
//! commit and share.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use leafrag_core::embed::RemoteEmbedder;
use leafrag_core::net::SharedLimiter;
use leafrag_core::preprocess::RemoteSegmenter;
use leafrag_core::vlm::RemoteVlm;
use leafrag_core::{
    Embedder, GtinMetric, PipelineConfig, PriceTable, ReferenceEmbedder, RunClients, ScriptedVlm,
    Segmenter, StubSegmenter, VlmClient,
};
use serde::Deserialize;

/// Environment variables holding bearer tokens for the remote clients.
/// Keys never appear in config files or on the command line.
pub const EMBEDDER_KEY_VAR: &str = "LEAFRAG_EMBEDDER_API_KEY";
pub const SEGMENTER_KEY_VAR: &str = "LEAFRAG_SEGMENTER_API_KEY";
pub const VLM_KEY_VAR: &str = "LEAFRAG_VLM_API_KEY";

/// Which embedder a run uses.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSpec {
    /// Deterministic in-process embedder; no network, fixed dimension.
    #[default]
    Reference,
    Remote {
        url: String,
        dimension: usize,
    },
}

/// Which segmenter a run uses.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmenterSpec {
    /// Deterministic centered-rectangle segmenter.
    #[default]
    Stub,
    Remote {
        url: String,
    },
}

/// Which vision-language model a run uses. There is no safe default: a
/// mock needs a script and a remote needs an endpoint, so commands that
/// complete prompts require one to be configured.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VlmSpec {
    /// Scripted responses keyed by item id; see `ScriptedVlm`.
    Mock {
        script: PathBuf,
    },
    Remote {
        url: String,
        model: String,
    },
}

fn default_k() -> usize {
    5
}

fn default_max_samples() -> usize {
    3
}

fn default_budget() -> u64 {
    128_000
}

fn default_workers() -> usize {
    4
}

fn default_prices() -> PriceTable {
    PriceTable {
        input_per_token: 0.0,
        output_per_token: 0.0,
    }
}

fn default_gtin_metric() -> GtinMetric {
    GtinMetric::ExactSet
}

/// One run, fully described. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest (JSONL, one item per line).
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Vector-store snapshot, written by `index` and read by `run`.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    /// Trace file (JSONL, one record per test item), appended by `run`.
    #[serde(default)]
    pub traces: Option<PathBuf>,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    #[serde(default)]
    pub segmenter: SegmenterSpec,
    #[serde(default)]
    pub vlm: Option<VlmSpec>,
    /// Neighbours retrieved per query.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Few-shot samples a prompt starts from before budget reduction.
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
    /// Input-token budget per prompt.
    #[serde(default = "default_budget")]
    pub token_budget: u64,
    /// Worker threads for indexing and runs.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Per-token prices used by `evaluate` for the cost report.
    #[serde(default = "default_prices")]
    pub prices: PriceTable,
    /// Scoring rule for the GTINs target.
    #[serde(default = "default_gtin_metric")]
    pub gtin_metric: GtinMetric,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            manifest: None,
            snapshot: None,
            traces: None,
            embedder: EmbedderSpec::default(),
            segmenter: SegmenterSpec::default(),
            vlm: None,
            k: default_k(),
            max_samples: default_max_samples(),
            token_budget: default_budget(),
            workers: default_workers(),
            prices: default_prices(),
            gtin_metric: default_gtin_metric(),
        }
    }
}

/// Flags shared by the commands; every one overrides the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON configuration file; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Dataset manifest (JSONL)
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    /// Vector-store snapshot path
    #[arg(long, value_name = "FILE")]
    pub snapshot: Option<PathBuf>,

    /// Trace file (JSONL, one record per test item)
    #[arg(long, value_name = "FILE")]
    pub traces: Option<PathBuf>,

    /// Neighbours retrieved per query
    #[arg(long)]
    pub k: Option<usize>,

    /// Few-shot samples a prompt starts from
    #[arg(long)]
    pub max_samples: Option<usize>,

    /// Input-token budget per prompt
    #[arg(long)]
    pub budget: Option<u64>,

    /// Worker threads for indexing and runs
    #[arg(long)]
    pub workers: Option<usize>,

    /// GTIN scoring rule: exact_set, union, or any
    #[arg(long, value_name = "RULE")]
    pub gtin_metric: Option<String>,

    /// Embedder: "reference" or "remote:<url>:<dimension>"
    #[arg(long, value_name = "SPEC")]
    pub embedder: Option<String>,

    /// Segmenter: "stub" or "remote:<url>"
    #[arg(long, value_name = "SPEC")]
    pub segmenter: Option<String>,

    /// VLM: "mock:<script file>" or "remote:<url>:<model>"
    #[arg(long, value_name = "SPEC")]
    pub vlm: Option<String>,
}

fn parse_embedder(raw: &str) -> Result<EmbedderSpec> {
    if raw == "reference" {
        return Ok(EmbedderSpec::Reference);
    }
    if let Some(rest) = raw.strip_prefix("remote:") {
        // The dimension is the last colon-separated segment, so URLs with
        // ports or schemes stay intact.
        let (url, dimension) = rest
            .rsplit_once(':')
            .with_context(|| format!("embedder spec {raw:?} is missing a dimension"))?;
        let dimension: usize = dimension
            .parse()
            .with_context(|| format!("embedder spec {raw:?} has a non-numeric dimension"))?;
        return Ok(EmbedderSpec::Remote {
            url: url.to_string(),
            dimension,
        });
    }
    bail!("unknown embedder {raw:?}: expected \"reference\" or \"remote:<url>:<dimension>\"");
}

fn parse_segmenter(raw: &str) -> Result<SegmenterSpec> {
    if raw == "stub" {
        return Ok(SegmenterSpec::Stub);
    }
    if let Some(url) = raw.strip_prefix("remote:") {
        return Ok(SegmenterSpec::Remote {
            url: url.to_string(),
        });
    }
    bail!("unknown segmenter {raw:?}: expected \"stub\" or \"remote:<url>\"");
}

fn parse_vlm(raw: &str) -> Result<VlmSpec> {
    if let Some(script) = raw.strip_prefix("mock:") {
        return Ok(VlmSpec::Mock {
            script: PathBuf::from(script),
        });
    }
    if let Some(rest) = raw.strip_prefix("remote:") {
        let (url, model) = rest
            .rsplit_once(':')
            .with_context(|| format!("vlm spec {raw:?} is missing a model name"))?;
        return Ok(VlmSpec::Remote {
            url: url.to_string(),
            model: model.to_string(),
        });
    }
    bail!("unknown vlm {raw:?}: expected \"mock:<script file>\" or \"remote:<url>:<model>\"");
}

fn parse_gtin_metric(raw: &str) -> Result<GtinMetric> {
    match raw {
        "exact_set" => Ok(GtinMetric::ExactSet),
        "union" => Ok(GtinMetric::Union),
        "any" => Ok(GtinMetric::Any),
        other => bail!("unknown GTIN metric {other:?}: expected exact_set, union, or any"),
    }
}

impl RunConfig {
    /// Reads the config file named by `--config` (or starts from defaults),
    /// applies flag overrides, and validates the result.
    pub fn load(overrides: &Overrides) -> Result<RunConfig> {
        let mut config = match &overrides.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        config.apply(overrides)?;
        config.validate()?;
        Ok(config)
    }

    fn from_file(path: &Path) -> Result<RunConfig> {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&raw).with_context(|| format!("invalid config {}", path.display()))
    }

    fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(path) = &overrides.manifest {
            self.manifest = Some(path.clone());
        }
        if let Some(path) = &overrides.snapshot {
            self.snapshot = Some(path.clone());
        }
        if let Some(path) = &overrides.traces {
            self.traces = Some(path.clone());
        }
        if let Some(k) = overrides.k {
            self.k = k;
        }
        if let Some(max_samples) = overrides.max_samples {
            self.max_samples = max_samples;
        }
        if let Some(budget) = overrides.budget {
            self.token_budget = budget;
        }
        if let Some(workers) = overrides.workers {
            self.workers = workers;
        }
        if let Some(raw) = &overrides.gtin_metric {
            self.gtin_metric = parse_gtin_metric(raw)?;
        }
        if let Some(raw) = &overrides.embedder {
            self.embedder = parse_embedder(raw)?;
        }
        if let Some(raw) = &overrides.segmenter {
            self.segmenter = parse_segmenter(raw)?;
        }
        if let Some(raw) = &overrides.vlm {
            self.vlm = Some(parse_vlm(raw)?);
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.k >= 1, "k must be at least 1 (got {})", self.k);
        ensure!(
            self.max_samples >= 1,
            "max_samples must be at least 1 (got {})",
            self.max_samples
        );
        ensure!(
            self.token_budget > 0,
            "token budget must be positive (got 0)"
        );
        ensure!(
            self.workers >= 1,
            "workers must be at least 1 (got {})",
            self.workers
        );
        Ok(())
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest.as_deref().context(
            "no manifest configured: set \"manifest\" in the config file or pass --manifest",
        )
    }

    pub fn require_snapshot(&self) -> Result<&Path> {
        self.snapshot.as_deref().context(
            "no snapshot configured: set \"snapshot\" in the config file or pass --snapshot",
        )
    }

    pub fn require_traces(&self) -> Result<&Path> {
        self.traces
            .as_deref()
            .context("no trace file configured: set \"traces\" in the config file or pass --traces")
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            max_samples: self.max_samples,
            token_budget: self.token_budget,
            ..PipelineConfig::default()
        }
    }

    /// Builds the configured clients. Remote clients share one in-flight
    /// limiter sized to the worker count and pick up their API keys from
    /// the environment.
    pub fn build_clients(&self) -> Result<Clients> {
        let limiter = SharedLimiter::new(self.workers);
        let segmenter: Box<dyn Segmenter> = match &self.segmenter {
            SegmenterSpec::Stub => Box::new(StubSegmenter::new()),
            SegmenterSpec::Remote { url } => Box::new(
                RemoteSegmenter::new(url.clone())
                    .with_auth_token(env_key(SEGMENTER_KEY_VAR))
                    .with_limiter(limiter.clone()),
            ),
        };
        let embedder: Box<dyn Embedder> = match &self.embedder {
            EmbedderSpec::Reference => Box::new(ReferenceEmbedder::new()),
            EmbedderSpec::Remote { url, dimension } => Box::new(
                RemoteEmbedder::new(url.clone(), *dimension)
                    .with_auth_token(env_key(EMBEDDER_KEY_VAR))
                    .with_limiter(limiter.clone()),
            ),
        };
        let vlm: Box<dyn VlmClient> = match self
            .vlm
            .as_ref()
            .context("no VLM configured: set \"vlm\" in the config file or pass --vlm")?
        {
            VlmSpec::Mock { script } => Box::new(
                ScriptedVlm::from_script_file(script)
                    .with_context(|| format!("cannot load VLM script {}", script.display()))?,
            ),
            VlmSpec::Remote { url, model } => Box::new(
                RemoteVlm::new(url.clone(), model.clone())
                    .with_api_key(env_key(VLM_KEY_VAR))
                    .with_limiter(limiter),
            ),
        };
        Ok(Clients {
            segmenter,
            embedder,
            vlm,
        })
    }
}

fn env_key(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

/// Owned clients for one command invocation.
pub struct Clients {
    segmenter: Box<dyn Segmenter>,
    embedder: Box<dyn Embedder>,
    vlm: Box<dyn VlmClient>,
}

impl Clients {
    pub fn run_clients(&self) -> RunClients<'_> {
        RunClients {
            segmenter: self.segmenter.as_ref(),
            embedder: self.embedder.as_ref(),
            vlm: self.vlm.as_ref(),
        }
    }
}
