//! Shapley-value attribution over sets of thoughts.
//!
//! Players are indexed positions in an id list and coalitions are bitmasks,
//! so games are limited to 63 players. Exact attribution enumerates every
//! coalition; [`mc_shapley`] samples permutations instead.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmBackend, PromptRequest};
use crate::prompts;
use crate::survey::MentalState;

pub const DEFAULT_EXACT_LIMIT: usize = 12;
const MAX_PLAYERS: usize = 63;

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("{players} players exceed the exact-enumeration limit of {limit}; use monte carlo")]
    TooManyPlayers { players: usize, limit: usize },
    #[error("no players")]
    Empty,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("samples must be at least 1")]
    NoSamples,
    #[error("value function failed: {0}")]
    Value(String),
}

/// A set of players encoded as a bitmask over the id list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(pub u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn full(n: usize) -> Self {
        Coalition(if n == 64 { u64::MAX } else { (1u64 << n) - 1 })
    }

    pub fn contains(self, player: usize) -> bool {
        self.0 >> player & 1 == 1
    }

    pub fn with(self, player: usize) -> Self {
        Coalition(self.0 | 1 << player)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }
}

/// `v(S)`: the worth of a coalition.
pub trait ValueFunction: Sync {
    fn value(&self, coalition: Coalition) -> Result<f64, ShapleyError>;
}

impl<F> ValueFunction for F
where
    F: Fn(Coalition) -> f64 + Sync,
{
    fn value(&self, coalition: Coalition) -> Result<f64, ShapleyError> {
        Ok(self(coalition))
    }
}

/// Memoises a value function; each coalition is evaluated at most once.
pub struct CachedValue<V> {
    inner: V,
    cache: Mutex<HashMap<Coalition, f64>>,
    evaluations: AtomicUsize,
}

impl<V: ValueFunction> CachedValue<V> {
    pub fn new(inner: V) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            evaluations: AtomicUsize::new(0),
        }
    }

    /// Number of calls that reached the wrapped function.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &V {
        &self.inner
    }
}

impl<V: ValueFunction> ValueFunction for CachedValue<V> {
    fn value(&self, coalition: Coalition) -> Result<f64, ShapleyError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&coalition) {
            return Ok(*v);
        }
        let v = self.inner.value(coalition)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        // concurrent misses on the same coalition keep the first value
        Ok(*self
            .cache
            .lock()
            .expect("cache lock")
            .entry(coalition)
            .or_insert(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Signed contribution per thought id.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
    pub method: Method,
}

#[derive(Serialize, Deserialize)]
struct ImportanceJson {
    values: BTreeMap<String, f64>,
    method: String,
    samples: Option<usize>,
    seed: Option<u64>,
}

impl Serialize for ImportanceVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (method, samples, seed) = match self.method {
            Method::Exact => ("exact", None, None),
            Method::MonteCarlo { samples, seed } => ("monte_carlo", Some(samples), Some(seed)),
        };
        ImportanceJson {
            values: self.ids.iter().cloned().zip(self.values.iter().copied()).collect(),
            method: method.into(),
            samples,
            seed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ImportanceVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = ImportanceJson::deserialize(d)?;
        let method = match (raw.method.as_str(), raw.samples, raw.seed) {
            ("exact", _, _) => Method::Exact,
            ("monte_carlo", Some(samples), Some(seed)) => Method::MonteCarlo { samples, seed },
            (m, _, _) => return Err(serde::de::Error::custom(format!("bad method {m:?}"))),
        };
        let (ids, values) = raw.values.into_iter().unzip();
        Ok(Self { ids, values, method })
    }
}

impl ImportanceVector {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|p| self.values[p])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// The same vector restricted to `keep`, in `keep` order. Unknown ids are
    /// skipped.
    pub fn restrict(&self, keep: &[String]) -> ImportanceVector {
        let (ids, values) = keep
            .iter()
            .filter_map(|id| self.get(id).map(|v| (id.clone(), v)))
            .unzip();
        ImportanceVector {
            ids,
            values,
            method: self.method,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.ids.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

/// `s! (n - s - 1)! / n!` for every coalition size `s` in `0..n`.
fn shapley_weights(n: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=n)
        .scan(1.0f64, |acc, i| {
            if i > 0 {
                *acc *= i as f64;
            }
            Some(*acc)
        })
        .collect();
    (0..n)
        .map(|s| fact[s] * fact[n - s - 1] / fact[n])
        .collect()
}

/// Exact Shapley values by full coalition enumeration.
///
/// Coalition values are computed in parallel and then combined in a fixed
/// order, so the result does not depend on scheduling.
pub fn exact_shapley<V: ValueFunction>(
    vf: &V,
    ids: &[String],
    limit: usize,
) -> Result<ImportanceVector, ShapleyError> {
    let n = ids.len();
    if n == 0 {
        return Err(ShapleyError::Empty);
    }
    if n > limit.min(MAX_PLAYERS) {
        return Err(ShapleyError::TooManyPlayers { players: n, limit });
    }
    let worth: Vec<f64> = (0..1u64 << n)
        .into_par_iter()
        .map(|m| vf.value(Coalition(m)))
        .collect::<Result<_, _>>()?;
    let weights = shapley_weights(n);
    let values = (0..n)
        .map(|j| {
            let bit = 1u64 << j;
            (0..1u64 << n)
                .filter(|m| m & bit == 0)
                .map(|m| weights[m.count_ones() as usize] * (worth[(m | bit) as usize] - worth[m as usize]))
                .sum()
        })
        .collect();
    Ok(ImportanceVector {
        ids: ids.to_vec(),
        values,
        method: Method::Exact,
    })
}

/// Permutation-sampling estimate of the Shapley values.
///
/// Each sampled permutation contributes the marginal gains along its prefix
/// chain, so the estimate satisfies efficiency for any sample count.
pub fn mc_shapley<V: ValueFunction>(
    vf: &V,
    ids: &[String],
    samples: usize,
    seed: u64,
) -> Result<ImportanceVector, ShapleyError> {
    let n = ids.len();
    if n == 0 {
        return Err(ShapleyError::Empty);
    }
    if n > MAX_PLAYERS {
        return Err(ShapleyError::TooManyPlayers { players: n, limit: MAX_PLAYERS });
    }
    if samples == 0 {
        return Err(ShapleyError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let perms: Vec<Vec<usize>> = (0..samples)
        .map(|_| {
            order.shuffle(&mut rng);
            order.clone()
        })
        .collect();

    let mut needed = BTreeSet::new();
    for perm in &perms {
        let mut c = Coalition::EMPTY;
        needed.insert(c);
        for &p in perm {
            c = c.with(p);
            needed.insert(c);
        }
    }
    let needed: Vec<Coalition> = needed.into_iter().collect();
    let worth: HashMap<Coalition, f64> = needed
        .par_iter()
        .map(|&c| vf.value(c).map(|v| (c, v)))
        .collect::<Result<_, _>>()?;

    let mut values = vec![0.0; n];
    for perm in &perms {
        let mut c = Coalition::EMPTY;
        for &p in perm {
            let next = c.with(p);
            values[p] += worth[&next] - worth[&c];
            c = next;
        }
    }
    for v in &mut values {
        *v /= samples as f64;
    }
    Ok(ImportanceVector {
        ids: ids.to_vec(),
        values,
        method: Method::MonteCarlo { samples, seed },
    })
}

/// Exact when the player count is within `exact_limit`, sampled otherwise.
pub fn shapley<V: ValueFunction>(
    vf: &V,
    ids: &[String],
    exact_limit: usize,
    samples: usize,
    seed: u64,
) -> Result<ImportanceVector, ShapleyError> {
    if ids.len() <= exact_limit {
        exact_shapley(vf, ids, exact_limit)
    } else {
        mc_shapley(vf, ids, samples, seed)
    }
}

/// The `k` highest-scoring ids, ordered by score descending and then id.
pub fn top_k(iv: &ImportanceVector, k: usize) -> Result<Vec<String>, ShapleyError> {
    if k == 0 {
        return Err(ShapleyError::InvalidK);
    }
    if iv.is_empty() {
        return Err(ShapleyError::Empty);
    }
    let mut ranked: Vec<(&str, f64)> = iv.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(id, _)| id.to_string()).collect())
}

/// Label-alignment worth of a set of thoughts for one record.
///
/// `v(S)` asks the backend for a level given only the thoughts in `S`, and
/// scores `1` for the true level plus `0.1 * (5 - |predicted - true|) / 5`.
/// Unparseable replies are worth 0.
pub struct LabelAlignment<'a, B: ?Sized> {
    llm: &'a B,
    record_id: String,
    steps: Vec<String>,
    truth: MentalState,
    replies: Mutex<Vec<(Coalition, String)>>,
}

impl<'a, B: LlmBackend + ?Sized> LabelAlignment<'a, B> {
    /// `steps[i]` is the prompt line for player `i`.
    pub fn new(llm: &'a B, record_id: &str, steps: Vec<String>, truth: MentalState) -> Self {
        Self {
            llm,
            record_id: record_id.to_string(),
            steps,
            truth,
            replies: Mutex::new(Vec::new()),
        }
    }

    pub fn request(&self, coalition: Coalition) -> PromptRequest {
        prompts::label_request(
            &self.record_id,
            coalition
                .members()
                .take_while(|&i| i < self.steps.len())
                .map(|i| self.steps[i].as_str()),
        )
    }

    /// Raw replies in coalition order.
    pub fn replies(&self) -> Vec<(Coalition, String)> {
        let mut r = self.replies.lock().expect("replies lock").clone();
        r.sort_by_key(|(c, _)| *c);
        r
    }

    pub fn score(&self, predicted: Option<MentalState>) -> f64 {
        match predicted {
            None => 0.0,
            Some(p) => {
                let distance = (p.ordinal() as f64 - self.truth.ordinal() as f64).abs();
                let exact = if p == self.truth { 1.0 } else { 0.0 };
                exact + 0.1 * (5.0 - distance) / 5.0
            }
        }
    }
}

impl<B: LlmBackend + ?Sized> ValueFunction for LabelAlignment<'_, B> {
    fn value(&self, coalition: Coalition) -> Result<f64, ShapleyError> {
        let completion = self
            .llm
            .complete(&self.request(coalition))
            .map_err(|e| ShapleyError::Value(e.to_string()))?;
        let predicted = prompts::parse_label_reply(&completion.text);
        self.replies
            .lock()
            .expect("replies lock")
            .push((coalition, completion.text));
        Ok(self.score(predicted))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    /// v({1})=1, v({2})=0, v({1,2})=2, v(∅)=0
    fn two_player(c: Coalition) -> f64 {
        match c.0 {
            0b00 => 0.0,
            0b01 => 1.0,
            0b10 => 0.0,
            _ => 2.0,
        }
    }

    #[test]
    fn two_player_game() {
        // oracle: phi_1 = 1/2 (v1 - v0) + 1/2 (v12 - v2) = 1/2 + 1 = 1.5
        //         phi_2 = 1/2 (v2 - v0) + 1/2 (v12 - v1) = 0 + 1/2 = 0.5
        let iv = exact_shapley(&two_player, &ids(2), 12).unwrap();
        assert!((iv.values[0] - 1.5).abs() < 1e-12);
        assert!((iv.values[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_dummy() {
        let sym = |c: Coalition| (c.len() as f64).powi(2);
        let iv = exact_shapley(&sym, &ids(5), 12).unwrap();
        for v in &iv.values {
            assert!((v - iv.values[0]).abs() < 1e-12);
        }
        // player 2 (index 2) never changes the worth
        let dummy = |c: Coalition| (c.0 & 0b011) as f64 * 1.5;
        let iv = exact_shapley(&dummy, &ids(3), 12).unwrap();
        assert!(iv.values[2].abs() < 1e-12);
    }

    #[test]
    fn over_limit_is_size_error() {
        let v = |_c: Coalition| 0.0;
        assert!(matches!(
            exact_shapley(&v, &ids(13), 12),
            Err(ShapleyError::TooManyPlayers { players: 13, limit: 12 })
        ));
        assert!(matches!(exact_shapley(&v, &[], 12), Err(ShapleyError::Empty)));
    }

    #[test]
    fn mc_matches_exact_and_is_reproducible() {
        let a = mc_shapley(&two_player, &ids(2), 10_000, 42).unwrap();
        assert!((a.values[0] - 1.5).abs() < 0.05);
        let b = mc_shapley(&two_player, &ids(2), 10_000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.method, Method::MonteCarlo { samples: 10_000, seed: 42 });
    }

    #[test]
    fn mc_single_sample_is_efficient() {
        let game = |c: Coalition| (c.0 as f64).sqrt() + c.len() as f64;
        for seed in 0..10 {
            let iv = mc_shapley(&game, &ids(6), 1, seed).unwrap();
            let target = game(Coalition::full(6)) - game(Coalition::EMPTY);
            assert!((iv.total() - target).abs() < 1e-9);
        }
        assert!(matches!(
            mc_shapley(&game, &ids(2), 0, 0),
            Err(ShapleyError::NoSamples)
        ));
    }

    #[test]
    fn cache_evaluates_once() {
        let cached = CachedValue::new(two_player);
        exact_shapley(&cached, &ids(2), 12).unwrap();
        exact_shapley(&cached, &ids(2), 12).unwrap();
        assert_eq!(cached.evaluations(), 4);
    }

    #[test]
    fn top_k_cases() {
        let iv = ImportanceVector {
            ids: vec!["a".into(), "b".into(), "c".into()],
            values: vec![0.5, 0.2, 0.9],
            method: Method::Exact,
        };
        assert_eq!(top_k(&iv, 2).unwrap(), vec!["c", "a"]);
        assert_eq!(top_k(&iv, 10).unwrap().len(), 3);
        assert!(matches!(top_k(&iv, 0), Err(ShapleyError::InvalidK)));
        let tied = ImportanceVector {
            ids: vec!["z".into(), "y".into()],
            values: vec![1.0, 1.0],
            method: Method::Exact,
        };
        assert_eq!(top_k(&tied, 1).unwrap(), vec!["y"]);
        let empty = ImportanceVector { ids: vec![], values: vec![], method: Method::Exact };
        assert!(matches!(top_k(&empty, 1), Err(ShapleyError::Empty)));
    }

    #[test]
    fn importance_json_round_trip() {
        let iv = ImportanceVector {
            ids: vec!["a".into(), "b".into()],
            values: vec![0.25, -1.0],
            method: Method::MonteCarlo { samples: 10, seed: 3 },
        };
        let json = serde_json::to_value(&iv).unwrap();
        assert_eq!(json["method"], "monte_carlo");
        assert_eq!(json["values"]["b"], -1.0);
        assert_eq!(json["seed"], 3);
        let back: ImportanceVector = serde_json::from_value(json).unwrap();
        assert_eq!(back, iv);
    }

    #[test]
    fn label_alignment_scores() {
        let llm = ScriptedBackend::from_fn(|r| {
            Some(if r.user.contains("secure") { "LABEL: 4" } else { "LABEL: 2" }.to_string())
        });
        let vf = LabelAlignment::new(
            &llm,
            "r1",
            vec!["economics keyword: secure".into(), "health aspect: tired".into()],
            MentalState::Happy,
        );
        assert!((vf.value(Coalition(0b01)).unwrap() - 1.1).abs() < 1e-12);
        assert!((vf.value(Coalition(0b10)).unwrap() - 0.06).abs() < 1e-12);
        assert!(vf.request(Coalition::EMPTY).user.contains("(none)"));
        assert_eq!(vf.score(None), 0.0);
        let iv = exact_shapley(&vf, &ids(2), 12).unwrap();
        assert!(iv.values[0] > iv.values[1]);
        assert_eq!(vf.replies().len(), 6);
    }
}
