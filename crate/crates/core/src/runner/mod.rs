//! Experiment runner: dataset × strategies × backend, with cassette
//! record/replay and report emission.
//!
//! Outputs in the run's `out` directory:
//! - `results.csv` and `results.txt`: one row per strategy,
//! - `traces.jsonl`: one line per evaluated sample,
//! - `forests/<record_id>.json`: the forest built for each record.
//!
//! Runtime is the summed backend latency, which is zero under replay, so a
//! replayed run is byte-for-byte reproducible.

mod config;
mod pipeline;

use std::fs;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{SplitContext, ThoughtForest};
use crate::llm::{
    Cassette, LexiconBackend, LlmBackend, OpenAiCompatible, OpenAiConfig, RecordingBackend,
    ReplayBackend,
};
use crate::metrics::{evaluate, EvalResult};
use crate::report::{Report, ReportRow};
use crate::survey::{load_dataset, Dataset, Format};

pub use config::{
    BackendConfig, BackendMode, BaselineConfig, Overrides, RfotConfig, RunConfig, StrategyName,
    SIMULATED_SCHEME,
};
pub use pipeline::{
    record_seed, rfot_record, run_sample, select_samples, Metered, PipelineError, RfotRun,
    RfotTrace, SampleResult, SampleTrace,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("data error: {0}")]
    Data(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Backend(_) => 2,
            Self::Data(_) => 3,
        }
    }
}

/// A constructed backend plus the cassette it replays or records, if any.
pub struct BackendHandle {
    pub backend: Box<dyn LlmBackend>,
    pub cassette: Option<Arc<Cassette>>,
    pub mode: BackendMode,
}

impl BackendHandle {
    /// Wraps any backend as a live one (no cassette).
    pub fn live(backend: Box<dyn LlmBackend>) -> Self {
        Self {
            backend,
            cassette: None,
            mode: BackendMode::Live,
        }
    }
}

fn is_simulated(url: &str) -> bool {
    url.starts_with(&format!("{SIMULATED_SCHEME}:"))
}

/// Checks that the live backend's host accepts TCP connections.
pub fn probe(url: &str, timeout: Duration) -> Result<(), RunError> {
    let uri: ureq::http::Uri = url
        .parse()
        .map_err(|e| RunError::Config(format!("bad backend URL {url:?}: {e}")))?;
    let host = uri
        .host()
        .ok_or_else(|| RunError::Config(format!("backend URL {url:?} has no host")))?;
    let port = uri
        .port_u16()
        .unwrap_or(if uri.scheme_str() == Some("https") { 443 } else { 80 });
    let addrs: Vec<_> = (host, port)
        .to_socket_addrs()
        .map_err(|e| RunError::Backend(format!("cannot resolve {host}: {e}")))?
        .collect();
    for addr in &addrs {
        if TcpStream::connect_timeout(addr, timeout).is_ok() {
            return Ok(());
        }
    }
    Err(RunError::Backend(format!("backend {host}:{port} is unreachable")))
}

fn live_backend(cfg: &RunConfig) -> Result<Box<dyn LlmBackend>, RunError> {
    let url = cfg.backend.url.clone().expect("validated");
    if is_simulated(&url) {
        return Ok(Box::new(LexiconBackend::new()));
    }
    probe(&url, Duration::from_secs(5))?;
    Ok(Box::new(OpenAiCompatible::new(OpenAiConfig {
        url,
        model: cfg.backend.model.clone().expect("validated"),
        api_key: std::env::var(&cfg.backend.api_key_env).ok(),
        timeout_secs: cfg.backend.timeout_secs,
    })))
}

pub fn make_backend(cfg: &RunConfig, mode: BackendMode) -> Result<BackendHandle, RunError> {
    let cassette_path = cfg.backend.cassette.as_deref();
    match mode {
        BackendMode::Replay => {
            let path = cassette_path.expect("validated");
            let cassette = Arc::new(
                Cassette::load(path)
                    .map_err(|e| RunError::Data(format!("cassette {}: {e}", path.display())))?,
            );
            Ok(BackendHandle {
                backend: Box::new(ReplayBackend::new(cassette.clone())),
                cassette: Some(cassette),
                mode,
            })
        }
        BackendMode::Live => Ok(BackendHandle::live(live_backend(cfg)?)),
        BackendMode::Record => {
            let path = cassette_path.expect("validated");
            let cassette = Arc::new(
                Cassette::load_or_new(path)
                    .map_err(|e| RunError::Data(format!("cassette {}: {e}", path.display())))?,
            );
            Ok(BackendHandle {
                backend: Box::new(RecordingBackend::new(live_backend(cfg)?, cassette.clone())),
                cassette: Some(cassette),
                mode,
            })
        }
    }
}

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub samples: usize,
    pub results: Vec<(StrategyName, EvalResult)>,
    pub report: Report,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ForestDump<'a> {
    forest: &'a ThoughtForest,
    importance: &'a crate::shapley::ImportanceVector,
}

fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Data(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Runs every configured strategy on `dataset` with an already-built
/// backend and writes the outputs.
pub fn run_with(
    cfg: &RunConfig,
    dataset: &Dataset,
    handle: &BackendHandle,
) -> Result<RunSummary, RunError> {
    let selected = select_samples(&dataset.records, cfg.samples, cfg.seed);
    if selected.is_empty() {
        return Err(RunError::Data("dataset has no records".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let llm: &dyn LlmBackend = handle.backend.as_ref();

    let mut traces = Vec::new();
    let mut forests: Vec<ThoughtForest> = Vec::new();
    let mut results = Vec::new();
    let mut report = Report::default();
    let llm_label = cfg.llm_label();
    let strategies = cfg.ordered_strategies();
    for strategy in strategies.iter().copied() {
        // every strategy sees the cassette from the start, so prompts that
        // strategies share get the same recorded completions
        if let Some(c) = &handle.cassette {
            c.rewind();
        }
        log::info!("running {strategy} on {} records", selected.len());
        let samples: Vec<SampleResult> = pool.install(|| {
            selected
                .par_iter()
                .map(|record| {
                    let context = cfg
                        .rfot
                        .split_context
                        .then(|| SplitContext::leave_one_out(&dataset.records, &record.record_id));
                    run_sample(
                        strategy,
                        record,
                        llm,
                        &cfg.rfot,
                        &cfg.baselines,
                        context.as_ref(),
                        cfg.seed,
                    )
                    .map_err(|e| {
                        RunError::Backend(format!("{strategy} on {}: {e}", record.record_id))
                    })
                })
                .collect::<Result<_, _>>()
        })?;
        let outcomes: Vec<_> = samples.iter().map(|s| s.trace.outcome()).collect();
        let eval = evaluate(&outcomes).map_err(|e| RunError::Data(e.to_string()))?;
        report.push(ReportRow::from_eval(
            &dataset.name,
            &llm_label,
            strategy.display_name(),
            &eval,
        ));
        results.push((strategy, eval));
        for s in samples {
            traces.push(s.trace);
            forests.extend(s.forest);
        }
    }
    // fine-tuning is part of the comparison table but not of this harness;
    // its row sits after IO, as in published tables
    let at = usize::from(strategies.contains(&StrategyName::Io));
    report.rows.insert(
        at,
        ReportRow::not_implemented(&dataset.name, &llm_label, "Fine Tuning (LoRA)"),
    );

    let out = &cfg.out;
    fs::create_dir_all(out.join("forests")).map_err(|e| io_err(out, e))?;
    write(&out.join("results.csv"), &report.to_csv())?;
    write(&out.join("results.txt"), &report.to_table())?;
    let mut jsonl = String::new();
    for t in &traces {
        jsonl.push_str(&serde_json::to_string(t).expect("trace serializes"));
        jsonl.push('\n');
    }
    write(&out.join("traces.jsonl"), &jsonl)?;
    for f in &forests {
        let importance = traces
            .iter()
            .find(|t| t.record_id == f.record_id && t.rfot.is_some())
            .and_then(|t| t.rfot.as_ref())
            .map(|r| &r.importance)
            .expect("forest has a trace");
        let dump = ForestDump {
            forest: f,
            importance,
        };
        let text = serde_json::to_string_pretty(&dump).expect("forest serializes") + "\n";
        write(&out.join("forests").join(format!("{}.json", f.record_id)), &text)?;
    }

    Ok(RunSummary {
        dataset: dataset.name.clone(),
        samples: selected.len(),
        results,
        report,
        out: out.clone(),
    })
}

fn partial_marker(cassette: &Path) -> PathBuf {
    let mut name = cassette.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

/// Validates `cfg`, loads the dataset, builds the backend and runs.
///
/// In record mode the cassette is saved whether or not the run succeeds;
/// a failed recording also leaves a `<cassette>.partial` marker, and a
/// later recording run resumes from what was saved.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let mode = cfg.validate()?;
    let path = cfg.dataset.as_deref().expect("validated");
    let format = Format::from_path(path)
        .ok_or_else(|| RunError::Data(format!("{}: unknown dataset format", path.display())))?;
    let dataset = load_dataset(path, format).map_err(|e| RunError::Data(e.to_string()))?;
    let handle = make_backend(cfg, mode)?;
    let result = run_with(cfg, &dataset, &handle);
    if mode == BackendMode::Record {
        let cassette_path = cfg.backend.cassette.as_deref().expect("validated");
        let cassette = handle.cassette.as_ref().expect("record mode has a cassette");
        cassette
            .save(cassette_path)
            .map_err(|e| RunError::Data(format!("saving cassette: {e}")))?;
        let marker = partial_marker(cassette_path);
        match &result {
            Ok(_) => {
                if marker.exists() {
                    fs::remove_file(&marker).map_err(|e| io_err(&marker, e))?;
                }
            }
            Err(e) => write(&marker, &format!("{e}\n"))?,
        }
    }
    result
}

/// A parsed `--strategy` value. Kept as one value so the flag is not read
/// as a repeated argument.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyList(pub Vec<StrategyName>);

fn parse_strategies(s: &str) -> Result<StrategyList, String> {
    StrategyName::parse_list(s).map(StrategyList)
}

/// Command-line interface of the `rfot` binary.
#[derive(Debug, Parser)]
#[command(name = "rfot", version, about = "Random forest of thoughts experiment runner")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Survey dataset (.jsonl or .csv).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Strategies to run: `all` or a comma list of io, cot, sc_cot, tot, rfot.
    #[arg(long, value_parser = parse_strategies)]
    pub strategy: Option<StrategyList>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Records evaluated per strategy.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Chat-completions URL of a live backend (`simulated://lexicon` for
    /// the built-in simulator).
    #[arg(long)]
    pub backend_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Cassette to replay, or to record into with --record.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Record live completions into the cassette.
    #[arg(long)]
    pub record: bool,
    /// Records processed concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            dataset: self.dataset.clone(),
            strategies: self.strategy.clone().map(|l| l.0),
            seed: self.seed,
            samples: self.samples,
            backend_url: self.backend_url.clone(),
            model: self.model.clone(),
            cassette: self.cassette.clone(),
            record: self.record,
            jobs: self.jobs,
            out: self.out.clone(),
        }
    }

    pub fn config(&self) -> Result<RunConfig, RunError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(self.overrides());
        Ok(cfg)
    }
}

/// Runs the CLI and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let outcome = cli.config().and_then(|cfg| run(&cfg));
    match outcome {
        Ok(summary) => {
            print!("{}", summary.report.to_table());
            println!("outputs written to {}", summary.out.display());
            0
        }
        Err(e) => {
            eprintln!("rfot: {e}");
            e.exit_code()
        }
    }
}
