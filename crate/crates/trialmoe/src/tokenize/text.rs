//! Word-level text tokenizer.
//!
//! Lowercases, then splits into alphanumeric runs and single punctuation
//! characters; whitespace only separates. Sequences are padded or truncated
//! to a fixed length of `max_len - 1`, leaving slot 0 of the encoder input
//! free for the modality's start token.

use crate::data::record::ModalityKind;
use crate::tokenize::vocab::{Vocabulary, PAD_ID};
use crate::tokenize::TokenSequence;

/// Split text into lowercase word and punctuation tokens.
pub fn split_words(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Tokenize to exactly `max_len - 1` positions (truncate, then pad).
/// `max_len` is the encoder's sequence budget including the start token.
pub fn tokenize_text(
    text: &str,
    vocab: &Vocabulary,
    kind: ModalityKind,
    max_len: usize,
) -> TokenSequence {
    assert!(max_len >= 2, "max_len must leave room for the start token");
    let budget = max_len - 1;
    let words = split_words(text);
    let mut ids: Vec<usize> = words.iter().take(budget).map(|w| vocab.id_or_unk(w)).collect();
    let content = ids.len();
    let mut mask = vec![true; content];
    ids.resize(budget, PAD_ID);
    mask.resize(budget, false);
    TokenSequence::new(ids, mask, kind)
}
