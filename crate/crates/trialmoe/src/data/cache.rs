//! On-disk cache for generated modality descriptions.
//!
//! Entries are keyed by (trial id, modality, prompt fingerprint): editing the
//! prompt template or schema changes the fingerprint and naturally invalidates
//! stale text. Writes go to a unique temporary file first and are renamed
//! into place, so concurrent writers and interrupted runs can never leave a
//! torn entry behind.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::record::ModalityKind;
use crate::error::Error;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct CacheEntry {
    trial_id: String,
    modality: ModalityKind,
    prompt_hash: String,
    text: String,
}

pub struct DescriptionCache {
    dir: PathBuf,
}

impl DescriptionCache {
    pub fn open(dir: &Path) -> Result<Self, Error> {
        std::fs::create_dir_all(dir)?;
        Ok(DescriptionCache { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, trial_id: &str, kind: ModalityKind, fingerprint: &str) -> PathBuf {
        // Sanitized id keeps filenames readable; the fingerprint prefix keeps
        // them unique even when sanitization collides.
        let safe: String = trial_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .take(48)
            .collect();
        self.dir
            .join(format!("{safe}__{}__{}.json", kind.name(), &fingerprint[..16.min(fingerprint.len())]))
    }

    /// Cached text for this exact (trial, modality, prompt) triple, if any.
    /// Entries whose stored key fields disagree with the request are treated
    /// as absent rather than served.
    pub fn get(&self, trial_id: &str, kind: ModalityKind, fingerprint: &str) -> Option<String> {
        let path = self.entry_path(trial_id, kind, fingerprint);
        let bytes = std::fs::read(path).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        (entry.trial_id == trial_id && entry.modality == kind && entry.prompt_hash == fingerprint)
            .then_some(entry.text)
    }

    /// Store text via write-then-rename.
    pub fn put(
        &self,
        trial_id: &str,
        kind: ModalityKind,
        fingerprint: &str,
        text: &str,
    ) -> Result<(), Error> {
        let entry = CacheEntry {
            trial_id: trial_id.to_string(),
            modality: kind,
            prompt_hash: fingerprint.to_string(),
            text: text.to_string(),
        };
        let final_path = self.entry_path(trial_id, kind, fingerprint);
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&entry)?)?;
        std::fs::rename(&tmp, &final_path)?;
        Ok(())
    }
}
