//! Per-record execution of each strategy, with the trace kept for audit.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{BaselineConfig, RfotConfig, StrategyName};
use crate::baselines::{run_baseline, BaselineError, StrategyConfig};
use crate::forest::{build_forest, predict, ForestError, Prediction, SplitContext, ThoughtForest, TreeTrace};
use crate::icot::{run_icot, GenerationEntry, IcotError, Thought};
use crate::llm::{Completion, LlmBackend, LlmError, PromptRequest};
use crate::metrics::SampleOutcome;
use crate::shapley::{shapley, CachedValue, ImportanceVector, LabelAlignment, ShapleyError};
use crate::survey::{MentalState, SurveyRecord};
use crate::trace::{mean_consistency, CallRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Icot(#[from] IcotError),
    #[error(transparent)]
    Shapley(#[from] ShapleyError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

impl PipelineError {
    /// Whether the failure came from the backend rather than from the
    /// reply contents. Backend failures stop a run; content failures only
    /// cost the sample its prediction.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Self::Icot(IcotError::Backend(_))
                | Self::Shapley(ShapleyError::Value(_))
                | Self::Forest(ForestError::Backend(_))
                | Self::Baseline(BaselineError::Backend(_))
        )
    }
}

/// Sums backend latency for one record's calls.
pub struct Metered<'a, B: ?Sized> {
    inner: &'a B,
    latency: Mutex<f64>,
    calls: Mutex<usize>,
}

impl<'a, B: LlmBackend + ?Sized> Metered<'a, B> {
    pub fn new(inner: &'a B) -> Self {
        Self {
            inner,
            latency: Mutex::new(0.0),
            calls: Mutex::new(0),
        }
    }

    pub fn latency(&self) -> f64 {
        *self.latency.lock().expect("latency lock")
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("calls lock")
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Metered<'_, B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        let c = self.inner.complete(req)?;
        *self.latency.lock().expect("latency lock") += c.latency;
        *self.calls.lock().expect("calls lock") += 1;
        Ok(c)
    }
}

/// The seed used for one record, stable under dataset reordering.
pub fn record_seed(seed: u64, record_id: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{record_id}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Up to `limit` records: each label's records are shuffled with `seed`,
/// then labels take turns in ordinal order.
pub fn select_samples(records: &[SurveyRecord], limit: usize, seed: u64) -> Vec<&SurveyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<MentalState, Vec<&SurveyRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.label).or_default().push(r);
    }
    for g in groups.values_mut() {
        g.shuffle(&mut rng);
        g.reverse();
    }
    let mut out = Vec::with_capacity(limit.min(records.len()));
    while out.len() < limit {
        let mut took = false;
        for g in groups.values_mut() {
            if out.len() == limit {
                break;
            }
            if let Some(r) = g.pop() {
                out.push(r);
                took = true;
            }
        }
        if !took {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfotTrace {
    pub thoughts: Vec<Thought>,
    pub generation_log: Vec<GenerationEntry>,
    pub importance: ImportanceVector,
    /// Replies to the attribution prompts, keyed by coalition bitmask.
    pub attribution: Vec<(u64, String)>,
    pub per_tree: Vec<(usize, MentalState)>,
    pub abstained: Vec<usize>,
    pub trees: Vec<TreeTrace>,
}

/// Everything produced for one record by the forest strategy.
pub struct RfotRun {
    pub prediction: Prediction,
    pub forest: ThoughtForest,
    pub trace: RfotTrace,
}

/// Candidate generation, attribution, forest construction and prediction
/// for one record.
pub fn rfot_record<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    cfg: &RfotConfig,
    context: Option<&SplitContext>,
    seed: u64,
) -> Result<RfotRun, PipelineError> {
    let mut candidates = run_icot(record, llm, &cfg.icot())?;
    let ids = candidates.ids();
    let steps: Vec<String> = candidates.thoughts.iter().map(Thought::step_text).collect();
    let vf = CachedValue::new(LabelAlignment::new(llm, &record.record_id, steps, record.label));
    let iv = shapley(&vf, &ids, cfg.exact_limit, cfg.mc_samples, seed)?;
    for t in &mut candidates.thoughts {
        t.importance = iv.get(&t.id);
    }
    let forest = build_forest(record, &candidates, &iv, &cfg.forest(), context, seed)?;
    let (prediction, trees) = predict(&forest, &candidates, &iv, llm)?;
    let attribution = vf
        .inner()
        .replies()
        .into_iter()
        .map(|(c, raw)| (c.0, raw))
        .collect();
    Ok(RfotRun {
        trace: RfotTrace {
            thoughts: candidates.thoughts,
            generation_log: candidates.generation_log,
            importance: iv,
            attribution,
            per_tree: prediction.per_tree.clone(),
            abstained: prediction.abstained.clone(),
            trees,
        },
        prediction,
        forest,
    })
}

/// One line of `traces.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub strategy: StrategyName,
    pub record_id: String,
    pub truth: MentalState,
    pub prediction: Option<MentalState>,
    pub error: Option<String>,
    pub runtime: f64,
    pub consistency: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<CallRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rfot: Option<RfotTrace>,
}

impl SampleTrace {
    pub fn outcome(&self) -> SampleOutcome {
        SampleOutcome {
            prediction: self.prediction,
            truth: self.truth,
            runtime: self.runtime,
            consistency: self.consistency,
        }
    }
}

pub struct SampleResult {
    pub trace: SampleTrace,
    pub forest: Option<ThoughtForest>,
}

/// Runs `strategy` on one record. Backend failures are returned as errors;
/// unusable replies leave the sample without a prediction.
pub fn run_sample<B: LlmBackend + ?Sized>(
    strategy: StrategyName,
    record: &SurveyRecord,
    llm: &B,
    rfot: &RfotConfig,
    baselines: &BaselineConfig,
    context: Option<&SplitContext>,
    seed: u64,
) -> Result<SampleResult, PipelineError> {
    let metered = Metered::new(llm);
    let seed = record_seed(seed, &record.record_id);
    let mut trace = SampleTrace {
        strategy,
        record_id: record.record_id.clone(),
        truth: record.label,
        prediction: None,
        error: None,
        runtime: 0.0,
        consistency: 0.0,
        calls: Vec::new(),
        rfot: None,
    };
    let mut forest = None;
    match baselines.baseline(strategy) {
        Some(b) => {
            let mut cfg = StrategyConfig::new(b);
            cfg.seed = Some(seed);
            match run_baseline(record, &metered, &cfg) {
                Ok(out) => {
                    trace.prediction = Some(out.label);
                    trace.consistency = mean_consistency(&out.calls);
                    trace.calls = out.calls;
                }
                Err(e) => {
                    let e = PipelineError::from(e);
                    if e.is_backend() {
                        return Err(e);
                    }
                    trace.error = Some(e.to_string());
                }
            }
        }
        None => match rfot_record(record, &metered, rfot, context, seed) {
            Ok(run) => {
                trace.prediction = Some(run.prediction.label);
                let scores: Vec<f64> = run
                    .trace
                    .generation_log
                    .iter()
                    .map(|g| g.consistency)
                    .chain(run.trace.trees.iter().map(|t| t.consistency))
                    .collect();
                trace.consistency = if scores.is_empty() {
                    1.0
                } else {
                    scores.iter().sum::<f64>() / scores.len() as f64
                };
                trace.rfot = Some(run.trace);
                forest = Some(run.forest);
            }
            Err(e) => {
                if e.is_backend() {
                    return Err(e);
                }
                trace.error = Some(e.to_string());
            }
        },
    }
    trace.runtime = metered.latency();
    Ok(SampleResult { trace, forest })
}
