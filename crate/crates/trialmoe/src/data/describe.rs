//! The description stage: unify every modality of a trial into plain text.
//!
//! With the language model enabled, each prose-backed field (diseases, drugs,
//! description, criteria) is linearized, wrapped in the summarization prompt,
//! and replaced by the model's one-sentence description; a whole-record
//! summary is generated the same way from the full linearization and becomes
//! an additional modality. SMILES strings are molecular structure, not prose:
//! they always pass through verbatim (joined with ".") for the chemical
//! tokenizer, in every mode.
//!
//! With the language model disabled (the passthrough ablation), texts are the
//! raw linearizations themselves and the derived summary modality is dropped.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::cache::DescriptionCache;
use crate::data::linearize::{linearize, linearize_all};
use crate::data::llm::LlmClient;
use crate::data::prompt::{PromptBundle, DEFAULT_SCHEMA};
use crate::data::record::{ModalityKind, TrialRecord};
use crate::error::Error;

/// Where a modality text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Produced by the language-model client (or its cache/cassette).
    Generated,
    /// Copied from the record without a model call.
    Passthrough,
}

/// One unified text channel of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityText {
    pub kind: ModalityKind,
    pub text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct DescribeOptions {
    /// When false, skip the language model entirely: passthrough
    /// linearizations, no derived summary modality.
    pub use_llm: bool,
    /// Schema definition inserted into every prompt.
    pub schema: String,
    /// Worker threads for fan-out across trials (1 = sequential).
    pub fanout: usize,
}

impl Default for DescribeOptions {
    fn default() -> Self {
        DescribeOptions {
            use_llm: true,
            schema: DEFAULT_SCHEMA.to_string(),
            fanout: 1,
        }
    }
}

impl DescribeOptions {
    /// The modalities the description stage will emit under these options,
    /// in canonical order.
    pub fn active_modalities(&self) -> Vec<ModalityKind> {
        if self.use_llm {
            ModalityKind::ALL.to_vec()
        } else {
            ModalityKind::SOURCE.to_vec()
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DescribeStats {
    /// Completions requested from the client (cache misses).
    pub client_calls: u64,
    /// Requests satisfied by the on-disk cache.
    pub cache_hits: u64,
}

/// SMILES passthrough text: molecules joined by "." (the standard separator
/// for disconnected structures). Empty list -> empty string.
pub fn smiles_passthrough(record: &TrialRecord) -> String {
    record.smiles.join(".")
}

fn generated_text(
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    record: &TrialRecord,
    kind: ModalityKind,
    bundle: &PromptBundle,
    stats: &DescribeStats_,
) -> Result<String, Error> {
    let fingerprint = bundle.fingerprint();
    if let Some(cache) = cache {
        if let Some(text) = cache.get(&record.id, kind, &fingerprint) {
            stats.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(text);
        }
    }
    stats.client_calls.fetch_add(1, Ordering::Relaxed);
    let text = client.complete(bundle)?;
    if let Some(cache) = cache {
        cache.put(&record.id, kind, &fingerprint, &text)?;
    }
    Ok(text)
}

/// Atomic counters shared across fan-out workers.
#[derive(Default)]
struct DescribeStats_ {
    client_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl DescribeStats_ {
    fn snapshot(&self) -> DescribeStats {
        DescribeStats {
            client_calls: self.client_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }
}

fn describe_one(
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    record: &TrialRecord,
    opts: &DescribeOptions,
    stats: &DescribeStats_,
) -> Result<Vec<ModalityText>, Error> {
    let mut out = Vec::new();
    if opts.use_llm {
        let bundle = PromptBundle::with_schema(&linearize_all(record), &opts.schema);
        out.push(ModalityText {
            kind: ModalityKind::Summarization,
            text: generated_text(client, cache, record, ModalityKind::Summarization, &bundle, stats)?,
            provenance: Provenance::Generated,
        });
    }
    for kind in ModalityKind::SOURCE {
        if kind.is_chemical() {
            out.push(ModalityText {
                kind,
                text: smiles_passthrough(record),
                provenance: Provenance::Passthrough,
            });
        } else if opts.use_llm {
            let bundle = PromptBundle::with_schema(&linearize(record, kind)?, &opts.schema);
            out.push(ModalityText {
                kind,
                text: generated_text(client, cache, record, kind, &bundle, stats)?,
                provenance: Provenance::Generated,
            });
        } else {
            out.push(ModalityText {
                kind,
                text: linearize(record, kind)?,
                provenance: Provenance::Passthrough,
            });
        }
    }
    Ok(out)
}

/// Describe every trial. Output index i corresponds to records[i]; within a
/// trial, texts are in canonical modality order.
pub fn describe_all(
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    records: &[TrialRecord],
    opts: &DescribeOptions,
) -> Result<(Vec<Vec<ModalityText>>, DescribeStats), Error> {
    let stats = DescribeStats_::default();
    let fanout = opts.fanout.max(1).min(records.len().max(1));
    if fanout <= 1 {
        let mut all = Vec::with_capacity(records.len());
        for record in records {
            all.push(describe_one(client, cache, record, opts, &stats)?);
        }
        return Ok((all, stats.snapshot()));
    }

    // Fan out across trials; each worker claims the next unprocessed index,
    // so results land at their record's position regardless of timing.
    let next = AtomicU64::new(0);
    let slots: Vec<Mutex<Option<Result<Vec<ModalityText>, Error>>>> =
        records.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..fanout {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed) as usize;
                if i >= records.len() {
                    break;
                }
                let result = describe_one(client, cache, &records[i], opts, &stats);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let mut all = Vec::with_capacity(records.len());
    for slot in slots {
        all.push(slot.into_inner().expect("slot lock").expect("worker filled slot")?);
    }
    Ok((all, stats.snapshot()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::llm::StubLlm;
    use crate::data::record::Phase;

    fn record(i: usize) -> TrialRecord {
        TrialRecord {
            id: format!("NCT{i:08}"),
            phase: Phase::One,
            diseases: vec!["asthma".into()],
            drugs: vec!["budesonide".into()],
            description: "Inhaled budesonide in adults with asthma.".into(),
            smiles: vec!["CCO".into(), "CC(=O)O".into()],
            criteria: "Inclusion: adults 18-65.".into(),
            label: (i % 2) as u8,
        }
    }

    #[test]
    fn full_mode_emits_all_modalities_in_order() {
        let stub = StubLlm::new();
        let (texts, stats) =
            describe_all(&stub, None, &[record(0)], &DescribeOptions::default()).unwrap();
        let kinds: Vec<ModalityKind> = texts[0].iter().map(|t| t.kind).collect();
        assert_eq!(kinds, ModalityKind::ALL.to_vec());
        // 4 prose fields + 1 whole-record summary; smiles never calls the model.
        assert_eq!(stats.client_calls, 5);
        assert_eq!(stub.calls(), 5);

        let summary = &texts[0][0];
        assert!(summary.text.starts_with("This sample concerns phase: phase 1; diseases: ['asthma']"));
        assert_eq!(summary.provenance, Provenance::Generated);

        let smiles = &texts[0][ModalityKind::Smiles.index()];
        assert_eq!(smiles.text, "CCO.CC(=O)O");
        assert_eq!(smiles.provenance, Provenance::Passthrough);
    }

    #[test]
    fn passthrough_mode_drops_summary_and_calls_no_model() {
        let stub = StubLlm::new();
        let opts = DescribeOptions {
            use_llm: false,
            ..DescribeOptions::default()
        };
        let (texts, stats) = describe_all(&stub, None, &[record(0)], &opts).unwrap();
        let kinds: Vec<ModalityKind> = texts[0].iter().map(|t| t.kind).collect();
        assert_eq!(kinds, ModalityKind::SOURCE.to_vec());
        assert_eq!(stats.client_calls, 0);
        assert_eq!(stub.calls(), 0);
        assert_eq!(texts[0][0].text, "diseases: ['asthma']");
        assert!(texts[0].iter().all(|t| t.provenance == Provenance::Passthrough));
        // SMILES passthrough is identical in both modes.
        assert_eq!(texts[0][3].text, "CCO.CC(=O)O");
    }

    #[test]
    fn second_pass_is_all_cache_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DescriptionCache::open(dir.path()).unwrap();
        let stub = StubLlm::new();
        let records = [record(0), record(1)];
        let opts = DescribeOptions::default();

        let (first, s1) = describe_all(&stub, Some(&cache), &records, &opts).unwrap();
        assert_eq!(s1.client_calls, 10);
        assert_eq!(s1.cache_hits, 0);

        let (second, s2) = describe_all(&stub, Some(&cache), &records, &opts).unwrap();
        assert_eq!(s2.client_calls, 0);
        assert_eq!(s2.cache_hits, 10);
        assert_eq!(first, second);
        assert_eq!(stub.calls(), 10);
    }

    #[test]
    fn fanout_matches_sequential_output() {
        let records: Vec<TrialRecord> = (0..12).map(record).collect();
        let stub = StubLlm::new();
        let opts = DescribeOptions::default();
        let (seq, _) = describe_all(&stub, None, &records, &opts).unwrap();
        let par_opts = DescribeOptions {
            fanout: 4,
            ..DescribeOptions::default()
        };
        let (par, _) = describe_all(&stub, None, &records, &par_opts).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn empty_smiles_passthrough_is_empty_string() {
        let mut r = record(0);
        r.smiles.clear();
        assert_eq!(smiles_passthrough(&r), "");
    }
}
