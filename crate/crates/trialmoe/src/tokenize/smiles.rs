//! Chemical tokenizer for SMILES strings.
//!
//! SMILES are split into chemically meaningful units rather than words:
//! bracket atoms (`[C@@H]`, `[O-]`) are single tokens, two-character
//! elements Cl and Br stay whole, `%nn` ring closures stay whole, and every
//! other character stands alone. The vocabulary is a fixed, closed alphabet
//! (plus the shared reserved ids), so SMILES token ids never depend on the
//! training corpus; out-of-alphabet units map to the unknown id and are
//! counted.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::record::ModalityKind;
use crate::tokenize::vocab::{Vocabulary, PAD_ID};
use crate::tokenize::TokenSequence;

/// Fixed token alphabet: bracket atoms first, then two-character elements,
/// organic-subset atoms, aromatic atoms, digits, ring-closure escapes, and
/// bond/branch punctuation.
pub const ALPHABET: &[&str] = &[
    // bracket atoms (chirality, charges, explicit hydrogens, common ions)
    "[C@H]", "[C@@H]", "[C@]", "[C@@]", "[nH]", "[n+]", "[N+]", "[N-]", "[NH+]", "[NH2+]",
    "[NH3+]", "[O-]", "[O+]", "[S+]", "[s+]", "[Se]", "[se]", "[Na+]", "[K+]", "[Li+]",
    "[Cl-]", "[Br-]", "[I-]", "[H]",
    // two-character elements
    "Cl", "Br",
    // organic-subset atoms
    "B", "C", "N", "O", "P", "S", "F", "I",
    // aromatic atoms
    "b", "c", "n", "o", "p", "s",
    // ring-closure digits
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    // two-digit ring closures
    "%10", "%11", "%12", "%13", "%14", "%15", "%16", "%17", "%18", "%19",
    // bonds, branches, separators
    "(", ")", ".", "=", "#", "-", "+", "/", "\\", ":", "~", "@", "*", "$", "?", ">",
];

/// Split a SMILES string into tokens.
///
/// Characters that are not part of any known unit (stray `%` without two
/// digits, unterminated `[`) are kept as single-character tokens so they
/// surface as unknowns instead of vanishing.
pub fn split_smiles(smiles: &str) -> Vec<String> {
    let chars: Vec<char> = smiles.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '[' => {
                if let Some(close) = chars[i..].iter().position(|&ch| ch == ']') {
                    tokens.push(chars[i..=i + close].iter().collect());
                    i += close + 1;
                } else {
                    tokens.push(c.to_string());
                    i += 1;
                }
            }
            '%' if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())
                && chars.get(i + 2).is_some_and(|d| d.is_ascii_digit()) =>
            {
                tokens.push(chars[i..i + 3].iter().collect());
                i += 3;
            }
            'B' if chars.get(i + 1) == Some(&'r') => {
                tokens.push("Br".into());
                i += 2;
            }
            'C' if chars.get(i + 1) == Some(&'l') => {
                tokens.push("Cl".into());
                i += 2;
            }
            _ => {
                tokens.push(c.to_string());
                i += 1;
            }
        }
    }
    tokens
}

/// Tokenizer with the closed chemical vocabulary.
pub struct SmilesTokenizer {
    vocab: Vocabulary,
    unknown: AtomicU64,
}

impl Default for SmilesTokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl SmilesTokenizer {
    pub fn new() -> SmilesTokenizer {
        let mut vocab = Vocabulary::with_reserved();
        for token in ALPHABET {
            vocab.push(token).expect("alphabet tokens are distinct");
        }
        SmilesTokenizer {
            vocab,
            unknown: AtomicU64::new(0),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Vocabulary size (reserved ids + alphabet); identical across runs.
    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    /// Tokenize a (possibly multi-molecule, "."-joined) SMILES text to
    /// exactly `max_len - 1` positions.
    pub fn tokenize(&self, smiles_text: &str, max_len: usize) -> TokenSequence {
        assert!(max_len >= 2, "max_len must leave room for the start token");
        let budget = max_len - 1;
        let units = split_smiles(smiles_text);
        let mut ids = Vec::with_capacity(budget);
        for unit in units.iter().take(budget) {
            match self.vocab.id(unit) {
                Some(id) => ids.push(id),
                None => {
                    self.unknown.fetch_add(1, Ordering::Relaxed);
                    ids.push(crate::tokenize::vocab::UNK_ID);
                }
            }
        }
        let content = ids.len();
        let mut mask = vec![true; content];
        ids.resize(budget, PAD_ID);
        mask.resize(budget, false);
        TokenSequence::new(ids, mask, ModalityKind::Smiles)
    }

    /// Out-of-alphabet units seen so far.
    pub fn unknown_count(&self) -> u64 {
        self.unknown.load(Ordering::Relaxed)
    }
}
