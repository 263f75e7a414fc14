//! Run configuration: a TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::baselines::{Baseline, DEFAULT_BREADTH, DEFAULT_CHAINS, DEFAULT_DEPTH};
use crate::forest::{AggregationMode, ForestConfig};
use crate::icot::IcotConfig;
use crate::shapley::DEFAULT_EXACT_LIMIT;

/// URL scheme selecting the built-in lexicon simulator as the live backend.
pub const SIMULATED_SCHEME: &str = "simulated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Io,
    Cot,
    ScCot,
    Tot,
    Rfot,
}

impl StrategyName {
    /// Table order.
    pub const ALL: [StrategyName; 5] = [Self::Io, Self::Cot, Self::ScCot, Self::Tot, Self::Rfot];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Io => "io",
            Self::Cot => "cot",
            Self::ScCot => "sc_cot",
            Self::Tot => "tot",
            Self::Rfot => "rfot",
        }
    }

    /// Row label in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Io => "IO",
            Self::Cot => "CoT",
            Self::ScCot => "SC-CoT",
            Self::Tot => "ToT",
            Self::Rfot => "RFoT",
        }
    }

    /// Parses `all` or a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<StrategyName>, String> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "io" => Ok(Self::Io),
            "cot" => Ok(Self::Cot),
            "sc_cot" | "sccot" => Ok(Self::ScCot),
            "tot" => Ok(Self::Tot),
            "rfot" => Ok(Self::Rfot),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// Chat-completions URL of a live backend.
    pub url: Option<String>,
    pub model: Option<String>,
    /// Cassette to replay from, or to record into with `record`.
    pub cassette: Option<PathBuf>,
    pub record: bool,
    /// Environment variable holding the API key, if any.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            url: None,
            model: None,
            cassette: None,
            record: false,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendMode {
    Replay,
    Live,
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfotConfig {
    pub trees: usize,
    pub k: usize,
    pub mode: AggregationMode,
    pub max_keywords: usize,
    pub parse_retries: usize,
    /// Largest thought count attributed exactly; above it, sampling.
    pub exact_limit: usize,
    pub mc_samples: usize,
    /// Score splits against the other records' labels.
    pub split_context: bool,
}

impl Default for RfotConfig {
    fn default() -> Self {
        let f = ForestConfig::default();
        let i = IcotConfig::default();
        Self {
            trees: f.trees,
            k: f.k,
            mode: f.mode,
            max_keywords: i.max_keywords,
            parse_retries: i.parse_retries,
            exact_limit: DEFAULT_EXACT_LIMIT,
            mc_samples: 100,
            split_context: true,
        }
    }
}

impl RfotConfig {
    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            trees: self.trees,
            k: self.k,
            mode: self.mode,
        }
    }

    pub fn icot(&self) -> IcotConfig {
        IcotConfig {
            max_keywords: self.max_keywords,
            parse_retries: self.parse_retries,
            ..IcotConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub n_chains: usize,
    pub breadth: usize,
    pub depth: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            n_chains: DEFAULT_CHAINS,
            breadth: DEFAULT_BREADTH,
            depth: DEFAULT_DEPTH,
        }
    }
}

impl BaselineConfig {
    pub fn baseline(&self, s: StrategyName) -> Option<Baseline> {
        match s {
            StrategyName::Io => Some(Baseline::Io),
            StrategyName::Cot => Some(Baseline::Cot),
            StrategyName::ScCot => Some(Baseline::ScCot {
                n_chains: self.n_chains,
            }),
            StrategyName::Tot => Some(Baseline::Tot {
                breadth: self.breadth,
                depth: self.depth,
            }),
            StrategyName::Rfot => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub strategies: Vec<StrategyName>,
    pub seed: u64,
    /// Records evaluated per strategy.
    pub samples: usize,
    pub jobs: usize,
    pub out: PathBuf,
    /// Label for the model column of the report; defaults to the model
    /// name, or `cassette` in replay mode.
    pub llm_label: Option<String>,
    pub backend: BackendConfig,
    pub rfot: RfotConfig,
    pub baselines: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            strategies: vec![StrategyName::Rfot],
            seed: 0,
            samples: 100,
            jobs: 1,
            out: PathBuf::from("out"),
            llm_label: None,
            backend: BackendConfig::default(),
            rfot: RfotConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

/// Flag values; any that are set replace the file's.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub strategies: Option<Vec<StrategyName>>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub backend_url: Option<String>,
    pub model: Option<String>,
    pub cassette: Option<PathBuf>,
    pub record: bool,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Loads a config file. Relative paths inside it are taken relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.dataset);
        resolve(base, &mut cfg.backend.cassette);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.dataset {
            self.dataset = Some(v);
        }
        if let Some(v) = o.strategies {
            self.strategies = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.samples {
            self.samples = v;
        }
        if let Some(v) = o.backend_url {
            self.backend.url = Some(v);
        }
        if let Some(v) = o.model {
            self.backend.model = Some(v);
        }
        if let Some(v) = o.cassette {
            self.backend.cassette = Some(v);
        }
        if o.record {
            self.backend.record = true;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = o.out {
            self.out = v;
        }
    }

    pub fn backend_mode(&self) -> Result<BackendMode, RunError> {
        let b = &self.backend;
        match (&b.url, &b.cassette, b.record) {
            (None, Some(_), false) => Ok(BackendMode::Replay),
            (Some(_), None, false) => Ok(BackendMode::Live),
            (Some(_), Some(_), true) => Ok(BackendMode::Record),
            (_, None, true) => Err(RunError::Config("recording needs a cassette path".into())),
            (None, _, true) => Err(RunError::Config("recording needs a backend URL".into())),
            (Some(_), Some(_), false) => Err(RunError::Config(
                "both a backend URL and a cassette are set; pass --record to record, or drop one".into(),
            )),
            (None, None, false) => Err(RunError::Config(
                "no backend: set a backend URL or a cassette".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<BackendMode, RunError> {
        if self.dataset.is_none() {
            return Err(RunError::Config("no dataset given".into()));
        }
        if self.samples == 0 {
            return Err(RunError::Config("samples must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(RunError::Config("jobs must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(RunError::Config("no strategy selected".into()));
        }
        if self.baselines.n_chains == 0 || self.baselines.breadth == 0 || self.baselines.depth == 0 {
            return Err(RunError::Config("n_chains, breadth and depth must be at least 1".into()));
        }
        self.rfot
            .forest()
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        if self.rfot.max_keywords == 0 || self.rfot.mc_samples == 0 {
            return Err(RunError::Config("max_keywords and mc_samples must be at least 1".into()));
        }
        let mode = self.backend_mode()?;
        let simulated = self
            .backend
            .url
            .as_deref()
            .is_some_and(|u| u.starts_with(&format!("{SIMULATED_SCHEME}:")));
        if mode != BackendMode::Replay && !simulated && self.backend.model.is_none() {
            return Err(RunError::Config("a live backend needs a model name".into()));
        }
        Ok(mode)
    }

    /// Strategies deduplicated, in table order.
    pub fn ordered_strategies(&self) -> Vec<StrategyName> {
        let mut s = self.strategies.clone();
        s.sort();
        s.dedup();
        s
    }

    pub fn llm_label(&self) -> String {
        self.llm_label
            .clone()
            .or_else(|| self.backend.model.clone())
            .unwrap_or_else(|| "cassette".into())
    }
}
