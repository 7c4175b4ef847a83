//! The full multimodal model: per-modality encoders feeding a shared sparse
//! mixture of experts, disease-conditioned fusion, and the classification
//! heads, with the three-term training objective
//!
//! `total = classification + eta1 * consistency + eta2 * auxiliary`
//!
//! where the classification term is cross-entropy on the fused
//! representation, the consistency term ties each refined representation to
//! its perturbed twin, and the auxiliary term applies the classifier to
//! every raw per-modality representation.

use std::path::Path;

use autograd::{checkpoint, ParamStore, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{consistency_loss, perturb, AugmentConfig};
use crate::data::describe::ModalityText;
use crate::data::record::{ModalityKind, TrialRecord};
use crate::encoder::{init_position_table, EncoderConfig, ModalityEncoder, Positional};
use crate::error::Error;
use crate::fusion::{FusionParams, WeightingSet};
use crate::nn::Linear;
use crate::rng;
use crate::smoe::{GateNoise, GatingDecision, SmoeConfig, SparseMoe};
use crate::tokenize::smiles::SmilesTokenizer;
use crate::tokenize::text::tokenize_text;
use crate::tokenize::vocab::Vocabulary;
use crate::tokenize::TokenSequence;

pub const CONFIG_FILE: &str = "config.json";
pub const TEXT_VOCAB_FILE: &str = "vocab_text.json";
pub const SMILES_VOCAB_FILE: &str = "vocab_smiles.json";

/// Complete architectural description; hashed into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Sequence budget (including the start token) for prose modalities.
    pub text_max_len: usize,
    /// Sequence budget for the SMILES modality.
    pub smiles_max_len: usize,
    pub smoe: SmoeConfig,
    /// Which modalities condition the fusion weights.
    pub weighting: WeightingSet,
    /// Give each modality its own auxiliary head instead of reusing the
    /// fused classifier.
    pub separate_heads: bool,
    pub positional: Positional,
    /// Active modalities in canonical order.
    pub modalities: Vec<ModalityKind>,
    pub text_vocab_size: usize,
    pub smiles_vocab_size: usize,
}

impl ModelConfig {
    /// Defaults for the given modality set; vocabulary sizes are filled in
    /// by [`Model::new`] from the actual vocabularies.
    pub fn for_modalities(modalities: Vec<ModalityKind>) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig::default(),
            text_max_len: 128,
            smiles_max_len: 64,
            smoe: SmoeConfig::default(),
            weighting: WeightingSet::default(),
            separate_heads: false,
            positional: Positional::default(),
            modalities,
            text_vocab_size: 0,
            smiles_vocab_size: 0,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.encoder.validate()?;
        self.smoe.validate()?;
        if self.text_max_len < 2 || self.smiles_max_len < 2 {
            return Err(Error::Config(
                "sequence budgets must be at least 2 (start token + content)".into(),
            ));
        }
        if self.modalities.is_empty() {
            return Err(Error::Config("at least one modality required".into()));
        }
        let mut sorted = self.modalities.clone();
        sorted.sort_by_key(|k| k.index());
        sorted.dedup();
        if sorted.len() != self.modalities.len() || sorted != self.modalities {
            return Err(Error::Config(
                "modalities must be unique and in canonical order".into(),
            ));
        }
        if !self.modalities.contains(&ModalityKind::Diseases) {
            return Err(Error::Config(
                "the diseases modality is required (it conditions fusion)".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized config; stored in checkpoints so a
    /// checkpoint can never silently load into a different architecture.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("write to string");
        }
        hex
    }

    /// Index of a modality within the active list.
    pub fn modality_index(&self, kind: ModalityKind) -> Option<usize> {
        self.modalities.iter().position(|&k| k == kind)
    }

    fn conditioning_indices(&self) -> Vec<usize> {
        match self.weighting {
            WeightingSet::Diseases => vec![self
                .modality_index(ModalityKind::Diseases)
                .expect("validated: diseases present")],
            WeightingSet::All => (0..self.modalities.len()).collect(),
        }
    }
}

/// A trial ready for the numeric pipeline: one token sequence per active
/// modality, aligned with `ModelConfig::modalities`.
#[derive(Debug, Clone)]
pub struct PreppedTrial {
    pub id: String,
    pub label: u8,
    pub seqs: Vec<TokenSequence>,
}

/// Per-forward behaviour switches.
#[derive(Debug, Clone)]
pub struct ForwardOpts {
    /// Enables gate noise and dropout.
    pub train: bool,
    /// Run the perturbed twin pass with this augmentation (training only).
    pub augment: Option<AugmentConfig>,
    /// Weight of the consistency term.
    pub eta1: f64,
    /// Weight of the auxiliary term.
    pub eta2: f64,
    /// Compute per-modality auxiliary losses.
    pub use_aux: bool,
    /// Optional expert-importance balance penalty coefficient: penalizes the
    /// squared coefficient of variation of summed gate weights per expert.
    pub balance_coeff: Option<f64>,
    /// Seed for this forward pass; all noise streams derive from it.
    pub seed: u64,
    /// Reuse the clean pass's gate noise in the perturbed pass so both route
    /// through the same experts.
    pub shared_gate_noise: bool,
    /// Capture fusion weights and gating decisions.
    pub collect_details: bool,
}

impl ForwardOpts {
    pub fn train(seed: u64) -> ForwardOpts {
        ForwardOpts {
            train: true,
            augment: Some(AugmentConfig::default()),
            eta1: 0.1,
            eta2: 0.5,
            use_aux: true,
            balance_coeff: None,
            seed,
            shared_gate_noise: false,
            collect_details: false,
        }
    }

    pub fn eval() -> ForwardOpts {
        ForwardOpts {
            train: false,
            augment: None,
            eta1: 0.0,
            eta2: 0.0,
            use_aux: false,
            balance_coeff: None,
            seed: 0,
            shared_gate_noise: false,
            collect_details: false,
        }
    }
}

/// Captured internals of a forward pass, for reporting.
pub struct BatchDetails {
    /// Per trial: fusion weight per active modality.
    pub fusion_weights: Vec<Vec<f64>>,
    /// Per trial, per modality: the clean-gate routing decision.
    pub decisions: Vec<Vec<GatingDecision>>,
}

/// One batch's losses and predictions.
pub struct BatchOutput {
    /// Scalar loss in the graph; backward-ready.
    pub total: Tensor,
    pub loss_c: f64,
    pub loss_con: f64,
    pub loss_aux: f64,
    pub loss_balance: f64,
    /// P(success) per trial.
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
    /// Number of perturbed encoder passes that ran.
    pub perturbed_passes: usize,
    pub details: Option<BatchDetails>,
}

pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub text_vocab: Vocabulary,
    pub smiles_tok: SmilesTokenizer,
    encoders: Vec<ModalityEncoder>,
    pub smoe: SparseMoe,
    fusion: FusionParams,
    classifier: Linear,
    aux_heads: Vec<Linear>,
}

impl Model {
    /// Build a freshly initialized model. Vocabulary sizes in `cfg` are
    /// overwritten from the supplied vocabularies.
    pub fn new(mut cfg: ModelConfig, text_vocab: Vocabulary, master_seed: u64) -> Result<Model, Error> {
        let smiles_tok = SmilesTokenizer::new();
        cfg.text_vocab_size = text_vocab.len();
        cfg.smiles_vocab_size = smiles_tok.vocab_len();
        cfg.validate()?;

        let mut store = ParamStore::new();
        let mut init_rng = rng::stream(master_seed, "init");
        let max_len = cfg.text_max_len.max(cfg.smiles_max_len);
        let pos = init_position_table(
            &mut store,
            max_len,
            cfg.encoder.d_model,
            cfg.positional,
            &mut init_rng,
        )?;

        let mut encoders = Vec::with_capacity(cfg.modalities.len());
        for &kind in &cfg.modalities {
            let (vocab_size, start_id) = if kind.is_chemical() {
                (smiles_tok.vocab_len(), smiles_tok.vocab().start_id(kind))
            } else {
                (text_vocab.len(), text_vocab.start_id(kind))
            };
            encoders.push(ModalityEncoder::init(
                &mut store,
                kind,
                vocab_size,
                start_id,
                &pos,
                &cfg.encoder,
                &mut init_rng,
            )?);
        }

        let smoe = SparseMoe::init(&mut store, cfg.encoder.d_model, &cfg.smoe, &mut init_rng)?;
        let j_size = cfg.conditioning_indices().len();
        let fusion = FusionParams::init(
            &mut store,
            cfg.encoder.d_model,
            j_size,
            cfg.modalities.len(),
        )?;
        let classifier = Linear::init(
            &mut store,
            "classifier",
            cfg.encoder.d_model,
            2,
            &mut init_rng,
        )?;
        let mut aux_heads = Vec::new();
        if cfg.separate_heads {
            for &kind in &cfg.modalities {
                aux_heads.push(Linear::init(
                    &mut store,
                    &format!("aux.{}", kind.name()),
                    cfg.encoder.d_model,
                    2,
                    &mut init_rng,
                )?);
            }
        }

        Ok(Model {
            cfg,
            store,
            text_vocab,
            smiles_tok,
            encoders,
            smoe,
            fusion,
            classifier,
            aux_heads,
        })
    }

    /// Tokenize described trials. `texts[i]` must hold exactly the active
    /// modalities of `records[i]`, in canonical order.
    pub fn prep(
        &self,
        records: &[TrialRecord],
        texts: &[Vec<ModalityText>],
    ) -> Result<Vec<PreppedTrial>, Error> {
        if records.len() != texts.len() {
            return Err(Error::Config(format!(
                "{} records but {} description sets",
                records.len(),
                texts.len()
            )));
        }
        let mut prepped = Vec::with_capacity(records.len());
        for (record, modality_texts) in records.iter().zip(texts) {
            let kinds: Vec<ModalityKind> = modality_texts.iter().map(|t| t.kind).collect();
            if kinds != self.cfg.modalities {
                return Err(Error::Config(format!(
                    "trial {:?} has modalities {kinds:?}, model expects {:?}",
                    record.id, self.cfg.modalities
                )));
            }
            let mut seqs = Vec::with_capacity(modality_texts.len());
            for t in modality_texts {
                let seq = if t.kind.is_chemical() {
                    self.smiles_tok.tokenize(&t.text, self.cfg.smiles_max_len)
                } else {
                    tokenize_text(&t.text, &self.text_vocab, t.kind, self.cfg.text_max_len)
                };
                seqs.push(seq);
            }
            prepped.push(PreppedTrial {
                id: record.id.clone(),
                label: record.label,
                seqs,
            });
        }
        Ok(prepped)
    }

    /// Forward one batch and assemble the objective.
    pub fn run_batch(&self, batch: &[&PreppedTrial], opts: &ForwardOpts) -> Result<BatchOutput, Error> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset("empty batch".into()));
        }
        if let Some(a) = &opts.augment {
            a.validate()?;
        }
        let n_modalities = self.cfg.modalities.len();
        let j_idx = self.cfg.conditioning_indices();

        let mut noise_rng = rng::stream(opts.seed, "gate-noise");
        let mut aug_rng = rng::stream(opts.seed, "augment");
        let mut drop_rng = rng::stream(opts.seed, "dropout");
        let dropout_on = opts.train && self.cfg.encoder.dropout > 0.0;

        let mut ce_terms = Vec::with_capacity(batch.len());
        let mut aux_terms = Vec::new();
        let mut clean_refined_flat = Vec::new();
        let mut perturbed_refined_flat = Vec::new();
        let mut balance_rows = Vec::new();
        let mut probs = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        let mut perturbed_passes = 0usize;
        let mut details = opts.collect_details.then(|| BatchDetails {
            fusion_weights: Vec::with_capacity(batch.len()),
            decisions: Vec::with_capacity(batch.len()),
        });

        for trial in batch {
            if trial.seqs.len() != n_modalities {
                return Err(Error::Config(format!(
                    "trial {:?} has {} sequences, model expects {n_modalities}",
                    trial.id,
                    trial.seqs.len()
                )));
            }
            let class = trial.label as usize;
            let mut raw = Vec::with_capacity(n_modalities);
            let mut refined = Vec::with_capacity(n_modalities);
            let mut trial_decisions = Vec::with_capacity(n_modalities);

            for (m, seq) in trial.seqs.iter().enumerate() {
                let encoder = &self.encoders[m];
                let content = encoder.embed_content(seq)?;
                let u = encoder.encode_rows(&content, dropout_on.then_some(&mut drop_rng))?;
                let decision = self.smoe.gate(
                    &u,
                    if opts.train {
                        GateNoise::Draw(&mut noise_rng)
                    } else {
                        GateNoise::Off
                    },
                )?;
                let u_refined = self.smoe.refine(&u, &decision)?;

                if let Some(aug) = &opts.augment {
                    let v_content = perturb(&content, aug, &mut aug_rng)?;
                    let v = encoder.encode_rows(&v_content, dropout_on.then_some(&mut drop_rng))?;
                    let v_decision = match (&decision.noise, opts.shared_gate_noise) {
                        (Some(noise), true) => self.smoe.gate(&v, GateNoise::Fixed(noise))?,
                        _ if opts.train => self.smoe.gate(&v, GateNoise::Draw(&mut noise_rng))?,
                        _ => self.smoe.gate(&v, GateNoise::Off)?,
                    };
                    let v_refined = self.smoe.refine(&v, &v_decision)?;
                    clean_refined_flat.push(u_refined.clone());
                    perturbed_refined_flat.push(v_refined);
                    perturbed_passes += 1;
                }

                if opts.use_aux {
                    let head = if self.cfg.separate_heads {
                        &self.aux_heads[m]
                    } else {
                        &self.classifier
                    };
                    aux_terms.push(head.forward(&u)?.cross_entropy(class)?);
                }
                if opts.balance_coeff.is_some() {
                    balance_rows.push(decision.weight_row.clone());
                }
                raw.push(u);
                refined.push(u_refined);
                trial_decisions.push(decision);
            }

            let fused_out = self.fusion.fuse(&raw, &refined, &j_idx)?;
            let logits = self.classifier.forward(&fused_out.fused)?;
            probs.push(prob_success(&logits));
            labels.push(trial.label);
            ce_terms.push(logits.cross_entropy(class)?);

            if let Some(d) = details.as_mut() {
                d.fusion_weights.push(fused_out.weights.values().to_vec());
                d.decisions.push(trial_decisions);
            }
        }

        let loss_c_t = Tensor::add_n(&ce_terms)?.scale(1.0 / batch.len() as f64);
        let loss_c = loss_c_t.item()?;
        let mut total = loss_c_t;

        let mut loss_con = 0.0;
        if !clean_refined_flat.is_empty() {
            let con = consistency_loss(&clean_refined_flat, &perturbed_refined_flat)?;
            loss_con = con.item()?;
            total = total.add(&con.scale(opts.eta1))?;
        }

        let mut loss_aux = 0.0;
        if !aux_terms.is_empty() {
            let aux = Tensor::add_n(&aux_terms)?.scale(1.0 / aux_terms.len() as f64);
            loss_aux = aux.item()?;
            total = total.add(&aux.scale(opts.eta2))?;
        }

        let mut loss_balance = 0.0;
        if let Some(coeff) = opts.balance_coeff {
            // Importance per expert: summed gate weights across the batch.
            // Penalize the squared coefficient of variation so no expert
            // starves. The mean importance is positive by construction
            // (weights sum to 1 per decision).
            let importance = Tensor::add_n(&balance_rows)?;
            let mean = importance.mean()?;
            let centered = importance.sub(&mean)?;
            let var = centered.mul(&centered)?.mean()?;
            let cv2 = var.div(&mean.mul(&mean)?)?;
            let term = cv2.scale(coeff);
            loss_balance = term.item()?;
            total = total.add(&term)?;
        }

        Ok(BatchOutput {
            total,
            loss_c,
            loss_con,
            loss_aux,
            loss_balance,
            probs,
            labels,
            perturbed_passes,
            details,
        })
    }

    /// P(success) for each trial, inference mode (no noise, no dropout),
    /// in fixed-size batches.
    pub fn predict(&self, trials: &[PreppedTrial], batch_size: usize) -> Result<Vec<f64>, Error> {
        let opts = ForwardOpts::eval();
        let mut probs = Vec::with_capacity(trials.len());
        for chunk in trials.chunks(batch_size.max(1)) {
            let refs: Vec<&PreppedTrial> = chunk.iter().collect();
            probs.extend(self.run_batch(&refs, &opts)?.probs);
        }
        Ok(probs)
    }

    /// Parameter census grouped by component prefix, in registration order.
    pub fn param_groups(&self) -> Vec<(String, usize, usize)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: std::collections::HashMap<String, (usize, usize)> =
            std::collections::HashMap::new();
        for p in self.store.iter() {
            let mut parts = p.name.split('.');
            let first = parts.next().unwrap_or("");
            let group = if first == "enc" || first == "aux" {
                format!("{first}.{}", parts.next().unwrap_or(""))
            } else {
                first.to_string()
            };
            if !groups.contains_key(&group) {
                order.push(group.clone());
            }
            let slot = groups.entry(group).or_insert((0, 0));
            slot.0 += 1;
            slot.1 += p.tensor.len();
        }
        order
            .into_iter()
            .map(|g| {
                let (tensors, values) = groups[&g];
                (g, tensors, values)
            })
            .collect()
    }

    /// Persist config, vocabularies, and parameters.
    pub fn save(&self, dir: &Path) -> Result<(), Error> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(&self.cfg)?)?;
        self.text_vocab.save(&dir.join(TEXT_VOCAB_FILE))?;
        self.smiles_tok.vocab().save(&dir.join(SMILES_VOCAB_FILE))?;
        checkpoint::save(dir, &self.store, &self.cfg.fingerprint())?;
        Ok(())
    }

    /// Rebuild a model from [`Model::save`] output. The stored config hash
    /// must match the rebuilt architecture.
    pub fn load(dir: &Path) -> Result<Model, Error> {
        let cfg: ModelConfig = serde_json::from_slice(&std::fs::read(dir.join(CONFIG_FILE))?)?;
        let text_vocab = Vocabulary::load(&dir.join(TEXT_VOCAB_FILE))?;
        if text_vocab.len() != cfg.text_vocab_size {
            return Err(Error::Config(format!(
                "stored text vocabulary has {} entries, config says {}",
                text_vocab.len(),
                cfg.text_vocab_size
            )));
        }
        let smiles_vocab = Vocabulary::load(&dir.join(SMILES_VOCAB_FILE))?;
        let expected = cfg.fingerprint();
        let model = Model::new(cfg, text_vocab, 0)?;
        if smiles_vocab != *model.smiles_tok.vocab() {
            return Err(Error::Config(
                "stored chemical vocabulary differs from the built-in alphabet".into(),
            ));
        }
        checkpoint::load_into(dir, &model.store, Some(&expected))?;
        Ok(model)
    }
}

/// P(class 1) from a `1 x 2` logit row, computed stably.
pub fn prob_success(logits: &Tensor) -> f64 {
    let v = logits.values();
    debug_assert_eq!(v.len(), 2);
    let m = v[0].max(v[1]);
    let e0 = (v[0] - m).exp();
    let e1 = (v[1] - m).exp();
    e1 / (e0 + e1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::describe::{describe_all, DescribeOptions};
    use crate::data::llm::StubLlm;
    use crate::data::synthetic::{generate, SignalSpec};
    use crate::tokenize::text::split_words;

    pub(crate) fn small_config(modalities: Vec<ModalityKind>) -> ModelConfig {
        let mut cfg = ModelConfig::for_modalities(modalities);
        cfg.encoder = EncoderConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            dropout: 0.1,
        };
        cfg.text_max_len = 32;
        cfg.smiles_max_len = 24;
        cfg.smoe = SmoeConfig {
            n_experts: 4,
            top_k: 2,
            d_expert: 16,
        };
        cfg
    }

    pub(crate) fn small_model(seed: u64) -> (Model, Vec<PreppedTrial>) {
        let records = generate(6, 3, &SignalSpec::default()).unwrap();
        let (texts, _) =
            describe_all(&StubLlm::new(), None, &records, &DescribeOptions::default()).unwrap();
        let mut streams: Vec<Vec<String>> = Vec::new();
        for trial in &texts {
            for t in trial {
                if !t.kind.is_chemical() {
                    streams.push(split_words(&t.text));
                }
            }
        }
        let vocab =
            Vocabulary::build(streams.iter().map(|s| s.as_slice()), 512).unwrap();
        let model = Model::new(
            small_config(ModalityKind::ALL.to_vec()),
            vocab,
            seed,
        )
        .unwrap();
        let prepped = model.prep(&records, &texts).unwrap();
        (model, prepped)
    }

    #[test]
    fn run_batch_produces_finite_three_term_loss() {
        let (model, trials) = small_model(1);
        let refs: Vec<&PreppedTrial> = trials.iter().collect();
        let out = model.run_batch(&refs, &ForwardOpts::train(9)).unwrap();
        assert!(out.loss_c.is_finite() && out.loss_c > 0.0);
        assert!(out.loss_con.is_finite() && out.loss_con >= 0.0);
        assert!(out.loss_aux.is_finite() && out.loss_aux > 0.0);
        let expect_total = out.loss_c + 0.1 * out.loss_con + 0.5 * out.loss_aux;
        assert!((out.total.item().unwrap() - expect_total).abs() < 1e-9);
        assert_eq!(out.probs.len(), 6);
        assert!(out.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        // One perturbed pass per (trial, modality).
        assert_eq!(out.perturbed_passes, 6 * 6);
    }

    #[test]
    fn disabling_augmentation_zeroes_consistency_and_skips_passes() {
        let (model, trials) = small_model(1);
        let refs: Vec<&PreppedTrial> = trials.iter().collect();
        let mut opts = ForwardOpts::train(9);
        opts.augment = None;
        let out = model.run_batch(&refs, &opts).unwrap();
        assert_eq!(out.loss_con, 0.0);
        assert_eq!(out.perturbed_passes, 0);
        let expect_total = out.loss_c + 0.5 * out.loss_aux;
        assert!((out.total.item().unwrap() - expect_total).abs() < 1e-9);
    }

    #[test]
    fn disabling_aux_zeroes_that_term() {
        let (model, trials) = small_model(1);
        let refs: Vec<&PreppedTrial> = trials.iter().collect();
        let mut opts = ForwardOpts::train(9);
        opts.use_aux = false;
        let out = model.run_batch(&refs, &opts).unwrap();
        assert_eq!(out.loss_aux, 0.0);
        let expect_total = out.loss_c + 0.1 * out.loss_con;
        assert!((out.total.item().unwrap() - expect_total).abs() < 1e-9);
    }

    #[test]
    fn forward_is_bitwise_deterministic_per_seed() {
        let (model, trials) = small_model(2);
        let refs: Vec<&PreppedTrial> = trials.iter().collect();
        let a = model.run_batch(&refs, &ForwardOpts::train(5)).unwrap();
        let b = model.run_batch(&refs, &ForwardOpts::train(5)).unwrap();
        assert_eq!(a.total.item().unwrap().to_bits(), b.total.item().unwrap().to_bits());
        assert_eq!(a.probs, b.probs);
        let c = model.run_batch(&refs, &ForwardOpts::train(6)).unwrap();
        assert_ne!(a.total.item().unwrap().to_bits(), c.total.item().unwrap().to_bits());
    }

    #[test]
    fn eval_mode_is_noise_free_and_deterministic() {
        let (model, trials) = small_model(3);
        let refs: Vec<&PreppedTrial> = trials.iter().collect();
        let mut opts_a = ForwardOpts::eval();
        opts_a.seed = 1;
        let mut opts_b = ForwardOpts::eval();
        opts_b.seed = 999; // seed must not matter without noise sources
        let a = model.run_batch(&refs, &opts_a).unwrap();
        let b = model.run_batch(&refs, &opts_b).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.perturbed_passes, 0);
    }

    #[test]
    fn zero_parameter_classifier_predicts_half() {
        let logits = Tensor::zeros(1, 2);
        assert_eq!(prob_success(&logits), 0.5);
        // Logits (0, ln 3) -> 3/4 exactly.
        let logits = Tensor::from_vec(1, 2, vec![0.0, 3f64.ln()]).unwrap();
        assert!((prob_success(&logits) - 0.75).abs() < 1e-15);
        // Cross-entropy anchors: uniform logits -> ln 2.
        let ce = Tensor::zeros(1, 2).cross_entropy(0).unwrap().item().unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn save_load_round_trips_bitwise_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let (model, trials) = small_model(4);
        let before = model.predict(&trials, 4).unwrap();
        model.save(dir.path()).unwrap();
        let loaded = Model::load(dir.path()).unwrap();
        let after = loaded.predict(&trials, 4).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_mismatched_architecture() {
        let dir = tempfile::tempdir().unwrap();
        let (model, _trials) = small_model(5);
        model.save(dir.path()).unwrap();
        // Tamper with the stored config: change a hyperparameter.
        let raw = std::fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap();
        let tampered = raw.replace("\"top_k\": 2", "\"top_k\": 3");
        assert_ne!(raw, tampered);
        std::fs::write(dir.path().join(CONFIG_FILE), tampered).unwrap();
        assert!(Model::load(dir.path()).is_err());
    }

    #[test]
    fn prep_rejects_modality_mismatch() {
        let (model, _trials) = small_model(6);
        let records = generate(2, 1, &SignalSpec::default()).unwrap();
        let opts = DescribeOptions {
            use_llm: false, // produces SOURCE modalities, model expects ALL
            ..DescribeOptions::default()
        };
        let (texts, _) = describe_all(&StubLlm::new(), None, &records, &opts).unwrap();
        assert!(model.prep(&records, &texts).is_err());
    }

    #[test]
    fn details_capture_fusion_weights_and_routing() {
        let (model, trials) = small_model(7);
        let refs: Vec<&PreppedTrial> = trials.iter().take(2).collect();
        let mut opts = ForwardOpts::eval();
        opts.collect_details = true;
        let out = model.run_batch(&refs, &opts).unwrap();
        let details = out.details.expect("requested details");
        assert_eq!(details.fusion_weights.len(), 2);
        for w in &details.fusion_weights {
            assert_eq!(w.len(), 6);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(details.decisions[0].len(), 6);
        for d in &details.decisions[0] {
            assert_eq!(d.selected.len(), 2);
        }
    }

    #[test]
    fn balance_penalty_adds_nonnegative_term() {
        let (model, trials) = small_model(8);
        let refs: Vec<&PreppedTrial> = trials.iter().collect();
        let mut opts = ForwardOpts::train(3);
        opts.balance_coeff = Some(0.1);
        let out = model.run_batch(&refs, &opts).unwrap();
        assert!(out.loss_balance >= 0.0);
        let expect_total =
            out.loss_c + 0.1 * out.loss_con + 0.5 * out.loss_aux + out.loss_balance;
        assert!((out.total.item().unwrap() - expect_total).abs() < 1e-9);
    }

    #[test]
    fn config_fingerprint_tracks_architecture() {
        let a = small_config(ModalityKind::ALL.to_vec());
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.smoe.top_k = 3;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.modalities = ModalityKind::SOURCE.to_vec();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn config_validation_enforces_canonical_modalities() {
        let mut cfg = small_config(ModalityKind::ALL.to_vec());
        cfg.modalities = vec![ModalityKind::Drugs, ModalityKind::Diseases];
        assert!(cfg.validate().is_err()); // wrong order
        cfg.modalities = vec![ModalityKind::Drugs];
        assert!(cfg.validate().is_err()); // diseases missing
        cfg.modalities = ModalityKind::SOURCE.to_vec();
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn separate_heads_register_per_modality_parameters() {
        let mut cfg = small_config(ModalityKind::SOURCE.to_vec());
        cfg.separate_heads = true;
        let records = generate(2, 1, &SignalSpec::default()).unwrap();
        let opts = DescribeOptions {
            use_llm: false,
            ..DescribeOptions::default()
        };
        let (texts, _) = describe_all(&StubLlm::new(), None, &records, &opts).unwrap();
        let mut streams: Vec<Vec<String>> = Vec::new();
        for trial in &texts {
            for t in trial {
                if !t.kind.is_chemical() {
                    streams.push(split_words(&t.text));
                }
            }
        }
        let vocab = Vocabulary::build(streams.iter().map(|s| s.as_slice()), 256).unwrap();
        let model = Model::new(cfg, vocab, 0).unwrap();
        assert!(model.store.contains("aux.diseases.w"));
        assert!(model.store.contains("aux.smiles.w"));
        let groups = model.param_groups();
        assert!(groups.iter().any(|(g, _, _)| g == "aux.criteria"));
    }
}
