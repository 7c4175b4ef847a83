//! Tokenization: shared vocabulary machinery, a word-level text tokenizer,
//! and a regex-based chemical tokenizer for SMILES strings.

pub mod smiles;
pub mod text;
pub mod vocab;

use crate::data::record::ModalityKind;

/// A fixed-length token-id sequence with its validity mask.
///
/// Invariants, enforced at construction:
/// - `ids.len() == mask.len()`
/// - the mask is a true-prefix: no valid position follows a padding position
/// - padding positions hold the pad id
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub kind: ModalityKind,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, mask: Vec<bool>, kind: ModalityKind) -> TokenSequence {
        assert_eq!(ids.len(), mask.len(), "ids and mask must be the same length");
        let mut seen_pad = false;
        for (&id, &valid) in ids.iter().zip(&mask) {
            if valid {
                assert!(!seen_pad, "mask must be a contiguous true-prefix");
            } else {
                seen_pad = true;
                assert_eq!(id, vocab::PAD_ID, "padding positions must hold the pad id");
            }
        }
        TokenSequence { ids, mask, kind }
    }

    /// Number of valid (non-padding) positions.
    pub fn content_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_len_counts_prefix() {
        let seq = TokenSequence::new(
            vec![5, 9, 0, 0],
            vec![true, true, false, false],
            ModalityKind::Diseases,
        );
        assert_eq!(seq.content_len(), 2);
        assert_eq!(seq.len(), 4);
    }

    #[test]
    #[should_panic(expected = "contiguous true-prefix")]
    fn interior_padding_is_rejected() {
        TokenSequence::new(
            vec![5, 0, 9],
            vec![true, false, true],
            ModalityKind::Diseases,
        );
    }

    #[test]
    #[should_panic(expected = "pad id")]
    fn masked_positions_must_hold_pad() {
        TokenSequence::new(vec![5, 9], vec![true, false], ModalityKind::Diseases);
    }
}
