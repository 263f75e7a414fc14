//! Record/replay of completions keyed by request fingerprint.
//!
//! On disk a cassette is a JSON object `{fingerprint: [text, ...]}`. Replay
//! keeps one cursor per fingerprint, so a request issued twice receives the
//! first and then the second recorded text.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use super::{Completion, LlmBackend, LlmError, PromptRequest};

#[derive(Debug, Default)]
struct Inner {
    entries: BTreeMap<String, Vec<String>>,
    cursors: HashMap<String, usize>,
}

#[derive(Debug, Default)]
pub struct Cassette {
    inner: Mutex<Inner>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: BTreeMap<String, Vec<String>>) -> Self {
        Self {
            inner: Mutex::new(Inner {
                entries,
                cursors: HashMap::new(),
            }),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)?;
        let entries: BTreeMap<String, Vec<String>> =
            serde_json::from_str(&text).map_err(|e| LlmError::Decode(e.to_string()))?;
        Ok(Self::from_entries(entries))
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn load_or_new(path: &Path) -> Result<Self, LlmError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn to_json(&self) -> String {
        let inner = self.inner.lock().expect("cassette lock");
        let mut s = serde_json::to_string_pretty(&inner.entries).expect("entries serialize");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Appends a completion under the request's fingerprint.
    pub fn record(&self, req: &PromptRequest, text: &str) {
        self.append(req.fingerprint(), text.to_string());
    }

    fn append(&self, fingerprint: String, text: String) {
        let mut inner = self.inner.lock().expect("cassette lock");
        inner.entries.entry(fingerprint).or_default().push(text);
    }

    /// Next unread text for `fingerprint`, advancing its cursor.
    pub fn next(&self, fingerprint: &str) -> Option<String> {
        let mut inner = self.inner.lock().expect("cassette lock");
        let Inner { entries, cursors } = &mut *inner;
        let texts = entries.get(fingerprint)?;
        let cursor = cursors.entry(fingerprint.to_string()).or_insert(0);
        let text = texts.get(*cursor)?.clone();
        *cursor += 1;
        Some(text)
    }

    /// Like [`Cassette::next`], but appends `text` atomically when the
    /// recorded list is exhausted. Returns `(text, was_recorded)`.
    fn next_or_insert_with<F>(&self, fingerprint: &str, produce: F) -> Result<(String, bool), LlmError>
    where
        F: FnOnce() -> Result<String, LlmError>,
    {
        if let Some(text) = self.next(fingerprint) {
            return Ok((text, true));
        }
        let text = produce()?;
        let mut inner = self.inner.lock().expect("cassette lock");
        let Inner { entries, cursors } = &mut *inner;
        entries
            .entry(fingerprint.to_string())
            .or_default()
            .push(text.clone());
        *cursors.entry(fingerprint.to_string()).or_insert(0) += 1;
        Ok((text, false))
    }

    pub fn rewind(&self) {
        self.inner.lock().expect("cassette lock").cursors.clear();
    }

    pub fn fingerprints(&self) -> Vec<String> {
        let inner = self.inner.lock().expect("cassette lock");
        inner.entries.keys().cloned().collect()
    }

    pub fn entries(&self) -> BTreeMap<String, Vec<String>> {
        self.inner.lock().expect("cassette lock").entries.clone()
    }

    /// Total number of recorded completions.
    pub fn len(&self) -> usize {
        let inner = self.inner.lock().expect("cassette lock");
        inner.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Serves completions from a cassette; unknown requests are errors.
pub struct ReplayBackend {
    cassette: Arc<Cassette>,
    id: String,
}

impl ReplayBackend {
    pub fn new(cassette: Arc<Cassette>) -> Self {
        Self {
            cassette,
            id: "replay".into(),
        }
    }

    pub fn open(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Arc::new(Cassette::load(path)?)))
    }

    pub fn cassette(&self) -> &Arc<Cassette> {
        &self.cassette
    }
}

impl LlmBackend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let fp = req.fingerprint();
        let text = self
            .cassette
            .next(&fp)
            .ok_or(LlmError::CassetteMiss(fp))?;
        Ok(Completion {
            text,
            latency: 0.0,
            backend_id: self.id.clone(),
        })
    }
}

/// Wraps a live backend and appends every completion to a cassette.
///
/// Completions already on the cassette are served first, so recording into
/// a partial cassette only calls the live backend for the missing requests.
pub struct RecordingBackend<B> {
    inner: B,
    cassette: Arc<Cassette>,
    id: String,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B, cassette: Arc<Cassette>) -> Self {
        let id = format!("record:{}", inner.id());
        Self { inner, cassette, id }
    }

    pub fn cassette(&self) -> &Arc<Cassette> {
        &self.cassette
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let fp = req.fingerprint();
        let mut live_latency = None;
        let (text, _) = self.cassette.next_or_insert_with(&fp, || {
            let c = self.inner.complete(req)?;
            live_latency = Some(c.latency);
            Ok(c.text)
        })?;
        Ok(Completion {
            text,
            // cassette hits cost nothing, exactly as under replay
            latency: live_latency.unwrap_or(0.0),
            backend_id: self.id.clone(),
        })
    }
}
