//! Per-modality transformer encoders.
//!
//! Each modality owns its embedding table (whose reserved rows include the
//! modality's start token) and its own stack of pre-norm transformer layers;
//! the position table is shared across all encoders. The encoder reads out
//! the start-token position, so the output is a single `1 x d` vector per
//! sequence.
//!
//! Padding is handled by construction rather than by attention masking:
//! valid tokens always form a contiguous prefix, so the padded tail is
//! dropped before any layer runs. Attention over the surviving `T'+1` rows
//! is then exactly the masked attention over the padded length — no pad key
//! ever contributes a score, and only position 0 is read out — which a
//! regression test pins down bit for bit.

use autograd::{ParamStore, Tensor, TensorError};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::record::ModalityKind;
use crate::error::Error;
use crate::nn::{dropout, LayerNorm, Linear};
use crate::tokenize::TokenSequence;

/// Shape of one encoder stack. `n_layers = 0` is legal and reduces the
/// encoder to "start-token embedding plus position 0".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(Error::Config(
                "encoder dimensions must be positive".into(),
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// How the shared position table is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    /// Trainable table (the default).
    #[default]
    Learned,
    /// Frozen sinusoidal table: saved with checkpoints but never updated.
    Sinusoidal,
}

/// Build the shared position table and register it under `pos.table`.
pub fn init_position_table(
    store: &mut ParamStore,
    max_len: usize,
    d_model: usize,
    positional: Positional,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor, Error> {
    match positional {
        Positional::Learned => {
            let t = store.register(
                "pos.table",
                Tensor::randn(max_len, d_model, 0.02, rng).into_trainable(),
            )?;
            Ok(t)
        }
        Positional::Sinusoidal => {
            let mut values = vec![0.0; max_len * d_model];
            for p in 0..max_len {
                for j in 0..d_model / 2 {
                    let rate = 1.0 / 10000f64.powf(2.0 * j as f64 / d_model as f64);
                    values[p * d_model + 2 * j] = (p as f64 * rate).sin();
                    values[p * d_model + 2 * j + 1] = (p as f64 * rate).cos();
                }
                if d_model % 2 == 1 {
                    let j = d_model / 2;
                    let rate = 1.0 / 10000f64.powf(2.0 * j as f64 / d_model as f64);
                    values[p * d_model + d_model - 1] = (p as f64 * rate).sin();
                }
            }
            let t = store.register_frozen("pos.table", Tensor::from_vec(max_len, d_model, values)?)?;
            Ok(t)
        }
    }
}

struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    n_heads: usize,
}

impl Attention {
    fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Attention, Error> {
        Ok(Attention {
            q: Linear::init(store, &format!("{prefix}.q"), d_model, d_model, rng)?,
            k: Linear::init(store, &format!("{prefix}.k"), d_model, d_model, rng)?,
            v: Linear::init(store, &format!("{prefix}.v"), d_model, d_model, rng)?,
            o: Linear::init(store, &format!("{prefix}.o"), d_model, d_model, rng)?,
            n_heads,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let d_model = x.cols();
        let d_head = d_model / self.n_heads;
        let q = self.q.forward(x)?;
        let k = self.k.forward(x)?;
        let v = self.v.forward(x)?;
        let scale = 1.0 / (d_head as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = q.slice_cols(h * d_head, d_head)?;
            let kh = k.slice_cols(h * d_head, d_head)?;
            let vh = v.slice_cols(h * d_head, d_head)?;
            let scores = qh.matmul(&kh.transpose())?.scale(scale);
            let probs = scores.softmax(1)?;
            heads.push(probs.matmul(&vh)?);
        }
        let merged = Tensor::concat_cols(&heads)?;
        self.o.forward(&merged)
    }
}

struct FeedForward {
    w1: Linear,
    w2: Linear,
}

impl FeedForward {
    fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        d_ff: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<FeedForward, Error> {
        Ok(FeedForward {
            w1: Linear::init(store, &format!("{prefix}.w1"), d_model, d_ff, rng)?,
            w2: Linear::init(store, &format!("{prefix}.w2"), d_ff, d_model, rng)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.w2.forward(&self.w1.forward(x)?.relu())
    }
}

struct EncoderLayer {
    ln_attn: LayerNorm,
    attn: Attention,
    ln_ffn: LayerNorm,
    ffn: FeedForward,
}

/// One modality's encoder: embeddings plus a pre-norm transformer stack.
pub struct ModalityEncoder {
    pub kind: ModalityKind,
    pub embed: Tensor,
    pos: Tensor,
    layers: Vec<EncoderLayer>,
    start_id: usize,
    dropout: f64,
}

impl ModalityEncoder {
    pub fn init(
        store: &mut ParamStore,
        kind: ModalityKind,
        vocab_size: usize,
        start_id: usize,
        pos: &Tensor,
        cfg: &EncoderConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<ModalityEncoder, Error> {
        cfg.validate()?;
        if start_id >= vocab_size {
            return Err(Error::Config(format!(
                "start id {start_id} outside vocabulary of {vocab_size}"
            )));
        }
        let prefix = format!("enc.{}", kind.name());
        let embed = store.register(
            format!("{prefix}.embed"),
            Tensor::randn(vocab_size, cfg.d_model, 0.02, rng).into_trainable(),
        )?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let lp = format!("{prefix}.layer{l}");
            layers.push(EncoderLayer {
                ln_attn: LayerNorm::init(store, &format!("{lp}.ln_attn"), cfg.d_model)?,
                attn: Attention::init(store, &format!("{lp}.attn"), cfg.d_model, cfg.n_heads, rng)?,
                ln_ffn: LayerNorm::init(store, &format!("{lp}.ln_ffn"), cfg.d_model)?,
                ffn: FeedForward::init(store, &format!("{lp}.ffn"), cfg.d_model, cfg.d_ff, rng)?,
            });
        }
        Ok(ModalityEncoder {
            kind,
            embed,
            pos: pos.clone(),
            layers,
            start_id,
            dropout: cfg.dropout,
        })
    }

    /// Embed the valid prefix of a sequence (no positions added yet):
    /// `T' x d`, where `T'` is the content length. `T' = 0` yields no rows
    /// and the encoder reduces to the start token alone.
    pub fn embed_content(&self, seq: &TokenSequence) -> Result<Tensor, TensorError> {
        let content = seq.content_len();
        Tensor::embedding(&self.embed, &seq.ids[..content])
    }

    /// Encode pre-embedded content rows into the `1 x d` start-token readout.
    ///
    /// `content` must already exclude padding (see [`Self::embed_content`]);
    /// augmentation perturbs these rows before they arrive here. Dropout is
    /// active only when an rng is supplied.
    pub fn encode_rows(
        &self,
        content: &Tensor,
        mut drop_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor, TensorError> {
        let d_model = self.pos.cols();
        if content.rows() > 0 && content.cols() != d_model {
            return Err(TensorError::contract(
                "encode_rows",
                format!("content width {} != d_model {d_model}", content.cols()),
            ));
        }
        let total = content.rows() + 1;
        if total > self.pos.rows() {
            return Err(TensorError::contract(
                "encode_rows",
                format!(
                    "sequence of {total} exceeds position table of {}",
                    self.pos.rows()
                ),
            ));
        }
        let start = Tensor::embedding(&self.embed, &[self.start_id])?;
        let stacked = if content.rows() == 0 {
            start
        } else {
            Tensor::concat_rows(&[start, content.clone()])?
        };
        let mut x = stacked.add(&self.pos.slice_rows(0, total)?)?;
        for layer in &self.layers {
            let normed = layer.ln_attn.forward(&x)?;
            let attended = layer.attn.forward(&normed)?;
            x = x.add(&dropout(&attended, self.dropout, drop_rng.as_deref_mut())?)?;
            let normed = layer.ln_ffn.forward(&x)?;
            let ffned = layer.ffn.forward(&normed)?;
            x = x.add(&dropout(&ffned, self.dropout, drop_rng.as_deref_mut())?)?;
        }
        x.slice_rows(0, 1)
    }

    /// Convenience: embed a token sequence and encode it in one call.
    pub fn encode(
        &self,
        seq: &TokenSequence,
        drop_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor, TensorError> {
        let content = self.embed_content(seq)?;
        self.encode_rows(&content, drop_rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::vocab::{Vocabulary, PAD_ID};
    use rand::SeedableRng;

    fn vocab() -> Vocabulary {
        let words: Vec<String> = ["alpha", "beta", "gamma", "delta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Vocabulary::build([words.as_slice()], 64).unwrap()
    }

    fn encoder_with(cfg: &EncoderConfig, max_len: usize) -> (ParamStore, ModalityEncoder) {
        let v = vocab();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pos = init_position_table(&mut store, max_len, cfg.d_model, Positional::Learned, &mut rng)
            .unwrap();
        let enc = ModalityEncoder::init(
            &mut store,
            ModalityKind::Diseases,
            v.len(),
            v.start_id(ModalityKind::Diseases),
            &pos,
            cfg,
            &mut rng,
        )
        .unwrap();
        (store, enc)
    }

    fn seq(ids: Vec<usize>, width: usize) -> TokenSequence {
        let content = ids.len();
        let mut ids = ids;
        let mut mask = vec![true; content];
        ids.resize(width, PAD_ID);
        mask.resize(width, false);
        TokenSequence::new(ids, mask, ModalityKind::Diseases)
    }

    #[test]
    fn zero_layers_reduce_to_start_embedding_plus_position() {
        let cfg = EncoderConfig {
            n_layers: 0,
            dropout: 0.0,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
        };
        let (_store, enc) = encoder_with(&cfg, 6);
        let s = seq(vec![8, 9], 5);
        let out = enc.encode(&s, None).unwrap();
        let start_row = Tensor::embedding(&enc.embed, &[enc.start_id]).unwrap();
        let pos0 = enc.pos.slice_rows(0, 1).unwrap();
        let expect = start_row.add(&pos0).unwrap();
        assert_eq!(out.to_vec(), expect.to_vec());
    }

    #[test]
    fn padded_and_trimmed_sequences_encode_identically() {
        let cfg = EncoderConfig {
            dropout: 0.0,
            d_model: 16,
            n_heads: 4,
            d_ff: 32,
            n_layers: 2,
        };
        let (_store, enc) = encoder_with(&cfg, 12);
        // Same content, two different padded widths.
        let short = seq(vec![8, 9, 10], 5);
        let long = seq(vec![8, 9, 10], 11);
        let a = enc.encode(&short, None).unwrap();
        let b = enc.encode(&long, None).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn empty_content_encodes_start_token_only() {
        let cfg = EncoderConfig {
            dropout: 0.0,
            ..EncoderConfig::default()
        };
        let (_store, enc) = encoder_with(&cfg, 8);
        let s = seq(vec![], 7);
        let out = enc.encode(&s, None).unwrap();
        assert_eq!(out.shape(), (1, 64));
        assert!(out.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn output_depends_on_content_tokens() {
        let cfg = EncoderConfig {
            dropout: 0.0,
            ..EncoderConfig::default()
        };
        let (_store, enc) = encoder_with(&cfg, 8);
        let a = enc.encode(&seq(vec![8, 9], 7), None).unwrap();
        let b = enc.encode(&seq(vec![8, 10], 7), None).unwrap();
        assert_ne!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn encoding_is_deterministic_and_dropout_changes_it() {
        let cfg = EncoderConfig::default();
        let (_store, enc) = encoder_with(&cfg, 8);
        let s = seq(vec![8, 9, 10], 7);
        let a = enc.encode(&s, None).unwrap();
        let b = enc.encode(&s, None).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());

        let mut rng1 = ChaCha8Rng::seed_from_u64(4);
        let mut rng2 = ChaCha8Rng::seed_from_u64(4);
        let c = enc.encode(&s, Some(&mut rng1)).unwrap();
        let d = enc.encode(&s, Some(&mut rng2)).unwrap();
        assert_eq!(c.to_vec(), d.to_vec());
        assert_ne!(a.to_vec(), c.to_vec());
    }

    #[test]
    fn sequences_longer_than_position_table_are_rejected() {
        let cfg = EncoderConfig {
            dropout: 0.0,
            ..EncoderConfig::default()
        };
        let (_store, enc) = encoder_with(&cfg, 4);
        let s = seq(vec![8, 9, 10, 8], 6);
        assert!(enc.encode(&s, None).is_err());
    }

    #[test]
    fn sinusoidal_table_is_frozen_and_deterministic() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = init_position_table(&mut store, 16, 8, Positional::Sinusoidal, &mut rng).unwrap();
        // Row 0 alternates sin(0)=0, cos(0)=1.
        let row0: Vec<f64> = t.to_vec()[..8].to_vec();
        assert_eq!(row0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(store.iter_trainable().count(), 0);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(EncoderConfig {
            d_model: 10,
            n_heads: 4,
            ..EncoderConfig::default()
        }
        .validate()
        .is_err());
        assert!(EncoderConfig {
            dropout: 1.0,
            ..EncoderConfig::default()
        }
        .validate()
        .is_err());
        assert!(EncoderConfig::default().validate().is_ok());
    }
}
