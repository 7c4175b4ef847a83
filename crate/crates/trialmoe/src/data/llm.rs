//! Language-model clients: offline stub, cassette record/replay, and HTTP.
//!
//! All clients implement [`LlmClient`] and are safe to share across threads.
//! The default offline stub is deterministic, so whole pipelines (including
//! tests and the synthetic benchmark) run with no network access. Cassettes
//! store (prompt fingerprint, response) pairs as JSONL: a recording wrapper
//! fills one from any live client, and the replay client serves from it,
//! failing loudly on a miss instead of silently falling back.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::prompt::PromptBundle;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("cassette has no entry for prompt {fingerprint} (re-record it against a live client)")]
    CassetteMiss { fingerprint: String },

    #[error("cassette {path}:{line}: {msg}")]
    CassetteParse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("http request failed: {0}")]
    Http(String),

    #[error("malformed completion response: {0}")]
    MalformedResponse(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A completion client. Implementations must be shareable across threads so
/// description requests can fan out.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError>;
    fn name(&self) -> &'static str;
}

// ---------------------------------------------------------------------------
// Offline stub
// ---------------------------------------------------------------------------

/// Deterministic offline summarizer: echoes the first words of the
/// linearized sample. Keeps the text-unification pipeline exercised (and the
/// label signal present in the echoed fields) without any network.
#[derive(Default)]
pub struct StubLlm {
    calls: AtomicU64,
}

/// Number of whitespace-separated tokens the stub echoes.
pub const STUB_ECHO_TOKENS: usize = 64;

impl StubLlm {
    pub fn new() -> Self {
        Self::default()
    }

    /// How many completions this instance has served.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl LlmClient for StubLlm {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let echoed: Vec<&str> = prompt
            .linearization
            .split_whitespace()
            .take(STUB_ECHO_TOKENS)
            .collect();
        Ok(format!("This sample concerns {}", echoed.join(" ")))
    }

    fn name(&self) -> &'static str {
        "stub"
    }
}

// ---------------------------------------------------------------------------
// Cassettes
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CassetteEntry {
    prompt_hash: String,
    response: String,
}

/// Serves completions from a recorded cassette; any unknown prompt is an
/// error so replays can never silently diverge from the recording.
#[derive(Debug)]
pub struct ReplayLlm {
    entries: HashMap<String, String>,
    calls: AtomicU64,
}

impl ReplayLlm {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let file = File::open(path).map_err(|e| LlmError::CassetteParse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("cannot open: {e}"),
        })?;
        let mut entries = HashMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| LlmError::CassetteParse {
                path: path.display().to_string(),
                line: lineno,
                msg: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| LlmError::CassetteParse {
                    path: path.display().to_string(),
                    line: lineno,
                    msg: e.to_string(),
                })?;
            entries.insert(entry.prompt_hash, entry.response);
        }
        Ok(ReplayLlm {
            entries,
            calls: AtomicU64::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl LlmClient for ReplayLlm {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let fp = prompt.fingerprint();
        self.entries
            .get(&fp)
            .cloned()
            .ok_or(LlmError::CassetteMiss { fingerprint: fp })
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// Wraps any client and appends every new (fingerprint, response) pair to a
/// cassette file, deduplicating by fingerprint.
pub struct RecordingLlm<C: LlmClient> {
    inner: C,
    path: PathBuf,
    state: Mutex<RecorderState>,
}

struct RecorderState {
    writer: BufWriter<File>,
    seen: HashSet<String>,
}

impl<C: LlmClient> RecordingLlm<C> {
    pub fn create(inner: C, path: &Path) -> Result<Self, LlmError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        // Append so interrupted recording sessions can resume; reload any
        // fingerprints already on disk to keep the dedupe exact.
        let mut seen = HashSet::new();
        if path.exists() {
            if let Ok(existing) = ReplayLlm::load(path) {
                seen.extend(existing.entries.into_keys());
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordingLlm {
            inner,
            path: path.to_path_buf(),
            state: Mutex::new(RecorderState {
                writer: BufWriter::new(file),
                seen,
            }),
        })
    }

    pub fn cassette_path(&self) -> &Path {
        &self.path
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: LlmClient> LlmClient for RecordingLlm<C> {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        let response = self.inner.complete(prompt)?;
        let fp = prompt.fingerprint();
        let mut state = self.state.lock().expect("cassette lock poisoned");
        if state.seen.insert(fp.clone()) {
            let entry = CassetteEntry {
                prompt_hash: fp,
                response: response.clone(),
            };
            let line = serde_json::to_string(&entry)
                .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
            state.writer.write_all(line.as_bytes())?;
            state.writer.write_all(b"\n")?;
            state.writer.flush()?;
        }
        Ok(response)
    }

    fn name(&self) -> &'static str {
        "record"
    }
}

// ---------------------------------------------------------------------------
// HTTP client
// ---------------------------------------------------------------------------

/// Chat-completions HTTP client (OpenAI-compatible payload shape).
/// Configured from `LLM_ENDPOINT`, `LLM_MODEL`, and `LLM_API_KEY`.
pub struct HttpLlm {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
}

impl HttpLlm {
    pub fn new(endpoint: String, model: String, api_key: Option<String>) -> Self {
        HttpLlm {
            endpoint,
            model,
            api_key,
            client: reqwest::blocking::Client::new(),
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_env() -> Self {
        HttpLlm::new(
            std::env::var("LLM_ENDPOINT")
                .unwrap_or_else(|_| "https://api.openai.com/v1/chat/completions".into()),
            std::env::var("LLM_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".into()),
            std::env::var("LLM_API_KEY").ok(),
        )
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let payload = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user_text()},
            ],
            "temperature": 0.0,
        });
        let mut request = self.client.post(&self.endpoint).json(&payload);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| LlmError::Http(e.to_string()))?;
        let status = response.status();
        let body: serde_json::Value = response
            .json()
            .map_err(|e| LlmError::Http(format!("status {status}: {e}")))?;
        if !status.is_success() {
            return Err(LlmError::Http(format!("status {status}: {body}")));
        }
        body.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(|s| s.trim().to_string())
            .ok_or_else(|| {
                LlmError::MalformedResponse(format!("missing choices[0].message.content in {body}"))
            })
    }

    fn name(&self) -> &'static str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_echoes_leading_linearization_tokens() {
        let stub = StubLlm::new();
        let bundle = PromptBundle::new("diseases: ['cancer', 'melanoma']");
        let out = stub.complete(&bundle).unwrap();
        assert_eq!(out, "This sample concerns diseases: ['cancer', 'melanoma']");
        assert_eq!(stub.calls(), 1);
    }

    #[test]
    fn stub_truncates_to_sixty_four_tokens() {
        let long: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let bundle = PromptBundle::new(&long.join(" "));
        let out = StubLlm::new().complete(&bundle).unwrap();
        let words: Vec<&str> = out.split_whitespace().collect();
        // "This sample concerns" + 64 echoed tokens.
        assert_eq!(words.len(), 3 + STUB_ECHO_TOKENS);
        assert_eq!(*words.last().unwrap(), "w63");
    }

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cassette = dir.path().join("llm.jsonl");
        let prompts: Vec<PromptBundle> = (0..3)
            .map(|i| PromptBundle::new(&format!("drugs: ['d{i}']")))
            .collect();

        let recorder = RecordingLlm::create(StubLlm::new(), &cassette).unwrap();
        let mut expected = Vec::new();
        for p in &prompts {
            expected.push(recorder.complete(p).unwrap());
            // Duplicate call must not duplicate the cassette entry.
            recorder.complete(p).unwrap();
        }
        drop(recorder);

        let replay = ReplayLlm::load(&cassette).unwrap();
        assert_eq!(replay.len(), prompts.len());
        for (p, want) in prompts.iter().zip(&expected) {
            assert_eq!(&replay.complete(p).unwrap(), want);
        }

        let miss = replay.complete(&PromptBundle::new("drugs: ['other']"));
        assert!(matches!(miss, Err(LlmError::CassetteMiss { .. })));
    }

    #[test]
    fn corrupt_cassette_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let cassette = dir.path().join("llm.jsonl");
        std::fs::write(&cassette, "{\"prompt_hash\":\"a\",\"response\":\"b\"}\nnot json\n").unwrap();
        let err = ReplayLlm::load(&cassette).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn recording_resumes_without_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let cassette = dir.path().join("llm.jsonl");
        let p = PromptBundle::new("criteria: adults");
        {
            let rec = RecordingLlm::create(StubLlm::new(), &cassette).unwrap();
            rec.complete(&p).unwrap();
        }
        {
            let rec = RecordingLlm::create(StubLlm::new(), &cassette).unwrap();
            rec.complete(&p).unwrap();
            rec.complete(&PromptBundle::new("criteria: children")).unwrap();
        }
        let replay = ReplayLlm::load(&cassette).unwrap();
        assert_eq!(replay.len(), 2);
    }
}
