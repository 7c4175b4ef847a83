//! Vocabulary with reserved control tokens.
//!
//! Ids 0 and 1 are padding and unknown; ids 2..8 are the per-modality
//! sequence-start tokens (each modality gets its own, so its encoder can
//! learn a distinct readout anchor). Content tokens follow. Built
//! vocabularies rank tokens by descending frequency with lexicographic
//! tie-breaks, so construction is order-independent. Files are JSON
//! `{token: id}` maps.

use std::collections::HashMap;
use std::path::Path;

use crate::data::record::ModalityKind;
use crate::error::Error;

pub const PAD_TOKEN: &str = "[pad]";
pub const UNK_TOKEN: &str = "[unk]";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Number of reserved ids: pad, unk, and one start token per modality.
pub const RESERVED: usize = 2 + ModalityKind::ALL.len();

/// The start-of-sequence token string for a modality.
pub fn start_token(kind: ModalityKind) -> String {
    format!("[cls:{}]", kind.name())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// A vocabulary holding only the reserved tokens.
    pub fn with_reserved() -> Vocabulary {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        v.push_unchecked(PAD_TOKEN.to_string());
        v.push_unchecked(UNK_TOKEN.to_string());
        for kind in ModalityKind::ALL {
            v.push_unchecked(start_token(kind));
        }
        debug_assert_eq!(v.len(), RESERVED);
        v
    }

    fn push_unchecked(&mut self, token: String) {
        let id = self.tokens.len();
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
    }

    /// Append a content token; duplicates are an error.
    pub fn push(&mut self, token: &str) -> Result<usize, Error> {
        if self.ids.contains_key(token) {
            return Err(Error::Config(format!("duplicate vocabulary token {token:?}")));
        }
        self.push_unchecked(token.to_string());
        Ok(self.tokens.len() - 1)
    }

    /// Build from token streams: count, rank by (frequency desc, token asc),
    /// keep the top `max_size - RESERVED` content tokens. `max_size` counts
    /// the reserved ids too and must exceed them.
    pub fn build<'a>(
        token_streams: impl IntoIterator<Item = &'a [String]>,
        max_size: usize,
    ) -> Result<Vocabulary, Error> {
        if max_size <= RESERVED {
            return Err(Error::Config(format!(
                "vocabulary max_size must exceed the {RESERVED} reserved ids, got {max_size}"
            )));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for stream in token_streams {
            for token in stream {
                *counts.entry(token.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut vocab = Vocabulary::with_reserved();
        for (token, _) in ranked.into_iter().take(max_size - RESERVED) {
            vocab.push(token)?;
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn start_id(&self, kind: ModalityKind) -> usize {
        2 + kind.index()
    }

    /// Save as a JSON `{token: id}` map with sorted keys.
    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let map: std::collections::BTreeMap<&str, usize> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(id, token)| (token.as_str(), id))
            .collect();
        std::fs::write(path, serde_json::to_vec_pretty(&map)?)?;
        Ok(())
    }

    /// Load and validate: ids must be dense 0..n with the reserved tokens in
    /// their fixed slots.
    pub fn load(path: &Path) -> Result<Vocabulary, Error> {
        let bytes = std::fs::read(path)?;
        let map: HashMap<String, usize> =
            serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, 0, e))?;
        let mut tokens = vec![String::new(); map.len()];
        for (token, id) in &map {
            if *id >= tokens.len() {
                return Err(Error::parse(
                    path,
                    0,
                    format!("id {id} out of range for {} tokens", tokens.len()),
                ));
            }
            if !tokens[*id].is_empty() {
                return Err(Error::parse(path, 0, format!("duplicate id {id}")));
            }
            tokens[*id] = token.clone();
        }
        let vocab = Vocabulary {
            ids: map,
            tokens,
        };
        if vocab.len() < RESERVED
            || vocab.token(PAD_ID) != Some(PAD_TOKEN)
            || vocab.token(UNK_ID) != Some(UNK_TOKEN)
        {
            return Err(Error::parse(path, 0, "reserved tokens missing or misplaced"));
        }
        for kind in ModalityKind::ALL {
            if vocab.token(vocab.start_id(kind)) != Some(start_token(kind).as_str()) {
                return Err(Error::parse(
                    path,
                    0,
                    format!("start token for {kind} missing or misplaced"),
                ));
            }
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn reserved_layout_is_fixed() {
        let v = Vocabulary::with_reserved();
        assert_eq!(v.len(), 8);
        assert_eq!(v.token(0), Some("[pad]"));
        assert_eq!(v.token(1), Some("[unk]"));
        assert_eq!(v.token(2), Some("[cls:summarization]"));
        assert_eq!(v.token(7), Some("[cls:criteria]"));
        assert_eq!(v.start_id(ModalityKind::Smiles), 6);
    }

    #[test]
    fn build_ranks_by_frequency_then_lexicographic() {
        let s1 = stream(&["b", "a", "a", "c", "c"]);
        let s2 = stream(&["a", "d"]);
        let v = Vocabulary::build([s1.as_slice(), s2.as_slice()], RESERVED + 3).unwrap();
        // a:3, c:2, then b:1 vs d:1 -> b wins lexicographically.
        assert_eq!(v.id("a"), Some(RESERVED));
        assert_eq!(v.id("c"), Some(RESERVED + 1));
        assert_eq!(v.id("b"), Some(RESERVED + 2));
        assert_eq!(v.id("d"), None);
        assert_eq!(v.id_or_unk("d"), UNK_ID);
    }

    #[test]
    fn build_is_input_order_independent() {
        let s1 = stream(&["x", "y", "z", "y"]);
        let s2 = stream(&["z", "q"]);
        let a = Vocabulary::build([s1.as_slice(), s2.as_slice()], 64).unwrap();
        let b = Vocabulary::build([s2.as_slice(), s1.as_slice()], 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn max_size_must_exceed_reserved() {
        let s = stream(&["a"]);
        assert!(Vocabulary::build([s.as_slice()], RESERVED).is_err());
        assert!(Vocabulary::build([s.as_slice()], RESERVED + 1).is_ok());
    }

    #[test]
    fn save_load_round_trips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let s = stream(&["alpha", "beta", "alpha"]);
        let v = Vocabulary::build([s.as_slice()], 64).unwrap();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);

        // A file missing the pad token must be rejected.
        std::fs::write(&path, r#"{"a":0,"b":1}"#).unwrap();
        assert!(Vocabulary::load(&path).is_err());
    }
}
