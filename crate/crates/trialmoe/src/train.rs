//! The training loop and its artifacts.
//!
//! A run takes raw trial records, describes every modality as text, builds
//! a vocabulary from the training split, then optimizes the three-term
//! objective with AdamW under a cosine schedule. Each epoch appends one row
//! to `metrics.csv`; the best checkpoint by validation PR AUC is kept in
//! `best/`; `report.json`, `routing_stats.json`, and `resolved_config.json`
//! document the run. A non-finite loss aborts training after dumping
//! `numeric_abort.json`.
//!
//! Everything is deterministic in the master seed: the split, the batch
//! order, and every noise stream.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::data::cache::DescriptionCache;
use crate::data::describe::{describe_all, DescribeOptions, DescribeStats, ModalityText};
use crate::data::llm::LlmClient;
use crate::data::record::{ModalityKind, TrialRecord};
use crate::encoder::{EncoderConfig, Positional};
use crate::error::Error;
use crate::eval::{accuracy, compute_metrics, MetricReport};
use crate::fusion::WeightingSet;
use crate::model::{ForwardOpts, Model, ModelConfig, PreppedTrial};
use crate::optim::{cosine_lr, AdamW, AdamWConfig};
use crate::rng;
use crate::smoe::{RoutingStats, SmoeConfig};
use crate::tokenize::text::split_words;
use crate::tokenize::vocab::Vocabulary;

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.json";
pub const ROUTING_FILE: &str = "routing_stats.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const ABORT_FILE: &str = "numeric_abort.json";
pub const BEST_DIR: &str = "best";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const SWEEP_FILE: &str = "seed_sweep.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Cosine,
    Constant,
}

/// Everything a training run needs, loadable from TOML or JSON with all
/// fields optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Master seed; every random choice in the run derives from it.
    pub seed: u64,
    /// Fraction of records held out for validation (stratified by label).
    pub val_fraction: f64,
    /// Vocabulary budget including reserved ids.
    pub max_vocab: usize,
    /// Decision threshold for F1 and accuracy.
    pub threshold: f64,

    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate.
    pub lr: f64,
    pub adamw: AdamWConfig,
    pub schedule: Schedule,

    /// Weight of the consistency term.
    pub eta1: f64,
    /// Weight of the auxiliary term.
    pub eta2: f64,
    pub augment: AugmentConfig,
    /// Reuse the clean pass's gate noise in the perturbed pass.
    pub shared_gate_noise: bool,
    /// Optional expert-importance balance penalty coefficient.
    pub balance_penalty: Option<f64>,

    /// Run the perturbed twin pass and the consistency term.
    pub use_augmentation: bool,
    /// Apply per-modality auxiliary losses.
    pub use_auxiliary: bool,
    /// Include the model-written summary modality (requires a language
    /// model client; when false the run uses source fields only).
    pub use_llm: bool,
    /// Condition fusion weights on all modalities instead of diseases only.
    pub weights_from_all: bool,
    /// Per-modality auxiliary heads instead of reusing the classifier.
    pub separate_heads: bool,

    pub encoder: EncoderConfig,
    pub smoe: SmoeConfig,
    pub text_max_len: usize,
    pub smiles_max_len: usize,
    pub positional: Positional,

    /// Worker threads for the describe stage.
    pub fanout: usize,
    /// Prompt schema override; empty string keeps the default.
    pub schema: String,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            seed: 0,
            val_fraction: 0.2,
            max_vocab: 4096,
            threshold: 0.5,
            epochs: 5,
            batch_size: 32,
            lr: 3e-4,
            adamw: AdamWConfig::default(),
            schedule: Schedule::Cosine,
            eta1: 0.1,
            eta2: 0.5,
            augment: AugmentConfig::default(),
            shared_gate_noise: false,
            balance_penalty: None,
            use_augmentation: true,
            use_auxiliary: true,
            use_llm: true,
            weights_from_all: false,
            separate_heads: false,
            encoder: EncoderConfig::default(),
            smoe: SmoeConfig::default(),
            text_max_len: 128,
            smiles_max_len: 64,
            positional: Positional::default(),
            fanout: 1,
            schema: String::new(),
        }
    }
}

impl TrainConfig {
    pub fn from_file(path: &Path) -> Result<TrainConfig, Error> {
        let raw = std::fs::read_to_string(path)?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let cfg: TrainConfig = match ext.as_str() {
            "json" => serde_json::from_str(&raw)?,
            "toml" => toml::from_str(&raw).map_err(|e| Error::Config(format!(
                "{}: {e}",
                path.display()
            )))?,
            other => {
                return Err(Error::Config(format!(
                    "unsupported config extension {other:?} (use .toml or .json)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.eta1 >= 0.0 && self.eta2 >= 0.0) {
            return Err(Error::Config("eta1 and eta2 must be non-negative".into()));
        }
        if let Some(b) = self.balance_penalty {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Config(format!(
                    "balance_penalty must be non-negative, got {b}"
                )));
            }
        }
        self.adamw.validate()?;
        self.augment.validate()?;
        self.to_model_config().validate()?;
        Ok(())
    }

    /// Active modalities implied by the language-model switch.
    pub fn modalities(&self) -> Vec<ModalityKind> {
        if self.use_llm {
            ModalityKind::ALL.to_vec()
        } else {
            ModalityKind::SOURCE.to_vec()
        }
    }

    pub fn to_model_config(&self) -> ModelConfig {
        let mut mc = ModelConfig::for_modalities(self.modalities());
        mc.encoder = self.encoder;
        mc.smoe = self.smoe;
        mc.text_max_len = self.text_max_len;
        mc.smiles_max_len = self.smiles_max_len;
        mc.weighting = if self.weights_from_all {
            WeightingSet::All
        } else {
            WeightingSet::Diseases
        };
        mc.separate_heads = self.separate_heads;
        mc.positional = self.positional;
        // Vocabulary sizes are placeholders until Model::new fills them;
        // give them nonzero values so validate() can run standalone.
        mc.text_vocab_size = self.max_vocab;
        mc.smiles_vocab_size = 1;
        mc
    }

    pub fn describe_options(&self) -> DescribeOptions {
        let mut opts = DescribeOptions {
            use_llm: self.use_llm,
            fanout: self.fanout.max(1),
            ..DescribeOptions::default()
        };
        if !self.schema.is_empty() {
            opts.schema = self.schema.clone();
        }
        opts
    }
}

/// Stratified split: within each label class the records are shuffled and
/// `fraction` of them (at least 1, at most all but 1) go to validation.
/// Returns (train indices, validation indices), each sorted ascending.
pub fn split_records(
    records: &[TrialRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), Error> {
    if records.len() < 4 {
        return Err(Error::EmptyDataset(format!(
            "need at least 4 records to split, got {}",
            records.len()
        )));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in records.iter().enumerate() {
        by_class[r.label as usize].push(i);
    }
    if by_class[0].len() < 2 || by_class[1].len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "need at least 2 records of each class, got {} negative / {} positive",
            by_class[0].len(),
            by_class[1].len()
        )));
    }
    let mut rng = rng::stream(seed, "split");
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in &mut by_class {
        class.shuffle(&mut rng);
        let n = class.len();
        let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        val.extend_from_slice(&class[..n_val]);
        train.extend_from_slice(&class[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Build a vocabulary from the prose modalities of the given descriptions.
pub fn build_vocabulary(
    texts: &[Vec<ModalityText>],
    max_vocab: usize,
) -> Result<Vocabulary, Error> {
    let mut streams: Vec<Vec<String>> = Vec::new();
    for trial in texts {
        for t in trial {
            if !t.kind.is_chemical() {
                streams.push(split_words(&t.text));
            }
        }
    }
    Vocabulary::build(streams.iter().map(|s| s.as_slice()), max_vocab)
}

/// Per-epoch row of `metrics.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss_c: f64,
    pub loss_con: f64,
    pub loss_aux: f64,
    pub val_pr_auc: f64,
    pub val_f1: f64,
    pub val_roc_auc: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub rows: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_val: MetricReport,
    pub final_val: MetricReport,
    pub final_train: MetricReport,
    pub describe_stats: DescribeStats,
    pub elapsed_seconds: f64,
    pub out_dir: PathBuf,
}

/// Run one full training job, writing artifacts under `out_dir`.
pub fn train(
    records: &[TrialRecord],
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome, Error> {
    cfg.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join(RESOLVED_CONFIG_FILE),
        serde_json::to_vec_pretty(cfg)?,
    )?;

    let (train_idx, val_idx) = split_records(records, cfg.val_fraction, cfg.seed)?;
    let (texts, describe_stats) = describe_all(client, cache, records, &cfg.describe_options())?;

    // Vocabulary from the training split only: the held-out records must
    // not influence the token inventory.
    let train_texts: Vec<Vec<ModalityText>> =
        train_idx.iter().map(|&i| texts[i].clone()).collect();
    let vocab = build_vocabulary(&train_texts, cfg.max_vocab)?;
    let model = Model::new(cfg.to_model_config(), vocab, cfg.seed)?;

    let all_prepped = model.prep(records, &texts)?;
    let train_set: Vec<PreppedTrial> =
        train_idx.iter().map(|&i| all_prepped[i].clone()).collect();
    let val_set: Vec<PreppedTrial> = val_idx.iter().map(|&i| all_prepped[i].clone()).collect();

    let mut optimizer = AdamW::new(cfg.adamw)?;
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;

    let mut metrics_csv = std::fs::File::create(out_dir.join(METRICS_FILE))?;
    writeln!(
        metrics_csv,
        "epoch,loss_c,loss_con,loss_aux,val_pr_auc,val_f1,val_roc_auc"
    )?;

    let mut rows: Vec<EpochRow> = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;
    let mut best_val: Option<MetricReport> = None;
    let mut global_step = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream_n(cfg.seed, "batch", epoch as u64));

        let mut sums = (0.0, 0.0, 0.0);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreppedTrial> = chunk.iter().map(|&i| &train_set[i]).collect();
            let opts = ForwardOpts {
                train: true,
                augment: cfg.use_augmentation.then_some(cfg.augment),
                eta1: cfg.eta1,
                eta2: cfg.eta2,
                use_aux: cfg.use_auxiliary,
                balance_coeff: cfg.balance_penalty,
                seed: rng::derive_seed(cfg.seed, &format!("step:{epoch}:{step}")),
                shared_gate_noise: cfg.shared_gate_noise,
                collect_details: false,
            };
            model.store.zero_grads();
            let out = model.run_batch(&batch, &opts)?;
            let total = out.total.item()?;
            if !total.is_finite() {
                let dump = out_dir.join(ABORT_FILE);
                let ids: Vec<&str> = batch.iter().map(|t| t.id.as_str()).collect();
                std::fs::write(
                    &dump,
                    serde_json::to_vec_pretty(&serde_json::json!({
                        "epoch": epoch,
                        "step": step,
                        "total": total.to_string(),
                        "loss_c": out.loss_c,
                        "loss_con": out.loss_con,
                        "loss_aux": out.loss_aux,
                        "trial_ids": ids,
                    }))?,
                )?;
                return Err(Error::NumericAbort {
                    epoch,
                    step,
                    loss_c: out.loss_c,
                    loss_con: out.loss_con,
                    loss_aux: out.loss_aux,
                    dump: dump.display().to_string(),
                });
            }
            out.total.backward()?;
            let lr = match cfg.schedule {
                Schedule::Cosine => cosine_lr(cfg.lr, global_step, total_steps),
                Schedule::Constant => cfg.lr,
            };
            optimizer.step(&model.store, lr)?;
            global_step += 1;

            let w = chunk.len() as f64;
            sums.0 += out.loss_c * w;
            sums.1 += out.loss_con * w;
            sums.2 += out.loss_aux * w;
        }

        let n = train_set.len() as f64;
        let val_probs = model.predict(&val_set, cfg.batch_size)?;
        let val_labels: Vec<u8> = val_set.iter().map(|t| t.label).collect();
        let val_report = compute_metrics(&val_probs, &val_labels, cfg.threshold)?;

        let row = EpochRow {
            epoch,
            loss_c: sums.0 / n,
            loss_con: sums.1 / n,
            loss_aux: sums.2 / n,
            val_pr_auc: val_report.pr_auc,
            val_f1: val_report.f1,
            val_roc_auc: val_report.roc_auc,
        };
        writeln!(
            metrics_csv,
            "{},{},{},{},{},{},{}",
            row.epoch, row.loss_c, row.loss_con, row.loss_aux, row.val_pr_auc, row.val_f1,
            row.val_roc_auc
        )?;
        rows.push(row);

        let improved = best_val
            .as_ref()
            .map(|b| val_report.pr_auc > b.pr_auc)
            .unwrap_or(true);
        if improved {
            best_epoch = epoch;
            best_val = Some(val_report.clone());
            model.save(&out_dir.join(BEST_DIR))?;
        }
    }
    metrics_csv.flush()?;

    let best_val = best_val.expect("at least one epoch ran");
    let final_val = {
        let probs = model.predict(&val_set, cfg.batch_size)?;
        let labels: Vec<u8> = val_set.iter().map(|t| t.label).collect();
        compute_metrics(&probs, &labels, cfg.threshold)?
    };
    let final_train = {
        let probs = model.predict(&train_set, cfg.batch_size)?;
        let labels: Vec<u8> = train_set.iter().map(|t| t.label).collect();
        compute_metrics(&probs, &labels, cfg.threshold)?
    };

    write_routing_stats(&model, &val_set, cfg.batch_size, &out_dir.join(ROUTING_FILE))?;

    let elapsed_seconds = started.elapsed().as_secs_f64();
    let (n_tensors, n_values) = (model.store.len(), model.store.value_count());
    std::fs::write(
        out_dir.join(REPORT_FILE),
        serde_json::to_vec_pretty(&serde_json::json!({
            "n_records": records.len(),
            "n_train": train_set.len(),
            "n_val": val_set.len(),
            "epochs": cfg.epochs,
            "steps": global_step,
            "best_epoch": best_epoch,
            "best_val": best_val,
            "final_val": final_val,
            "final_train": final_train,
            "describe": describe_stats,
            "parameters": {"tensors": n_tensors, "values": n_values},
            "elapsed_seconds": elapsed_seconds,
        }))?,
    )?;

    Ok(TrainOutcome {
        model,
        rows,
        best_epoch,
        best_val,
        final_val,
        final_train,
        describe_stats,
        elapsed_seconds,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Inference-mode routing and fusion statistics over a prepared set.
fn write_routing_stats(
    model: &Model,
    trials: &[PreppedTrial],
    batch_size: usize,
    path: &Path,
) -> Result<(), Error> {
    let mut stats = RoutingStats::new();
    let mut fusion_sums = vec![0.0f64; model.cfg.modalities.len()];
    let mut n_trials = 0usize;
    let mut opts = ForwardOpts::eval();
    opts.collect_details = true;
    for chunk in trials.chunks(batch_size.max(1)) {
        let refs: Vec<&PreppedTrial> = chunk.iter().collect();
        let out = model.run_batch(&refs, &opts)?;
        let details = out.details.expect("details requested");
        for weights in &details.fusion_weights {
            for (m, w) in weights.iter().enumerate() {
                fusion_sums[m] += w;
            }
            n_trials += 1;
        }
        for decisions in &details.decisions {
            for (m, d) in decisions.iter().enumerate() {
                stats.record(model.cfg.modalities[m].name(), d);
            }
        }
    }
    let fusion_mean: serde_json::Map<String, serde_json::Value> = model
        .cfg
        .modalities
        .iter()
        .zip(&fusion_sums)
        .map(|(kind, sum)| {
            (
                kind.name().to_string(),
                serde_json::json!(sum / n_trials.max(1) as f64),
            )
        })
        .collect();
    std::fs::write(
        path,
        serde_json::to_vec_pretty(&serde_json::json!({
            "experts": stats.to_json(),
            "fusion_mean_weight": fusion_mean,
            "n_trials": n_trials,
        }))?,
    )?;
    Ok(())
}

/// Describe and tokenize records for an existing model (evaluation path).
pub fn prep_for_model(
    model: &Model,
    records: &[TrialRecord],
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    fanout: usize,
    schema: Option<&str>,
) -> Result<(Vec<PreppedTrial>, DescribeStats), Error> {
    let mut opts = DescribeOptions {
        use_llm: model
            .cfg
            .modalities
            .contains(&ModalityKind::Summarization),
        fanout: fanout.max(1),
        ..DescribeOptions::default()
    };
    if let Some(s) = schema {
        opts.schema = s.to_string();
    }
    let (texts, stats) = describe_all(client, cache, records, &opts)?;
    Ok((model.prep(records, &texts)?, stats))
}

pub const ABLATION_VARIANTS: [&str; 5] = [
    "full",
    "no_augmentation",
    "no_auxiliary",
    "no_language_model",
    "weights_from_all",
];

/// The base config with one component removed or altered.
pub fn ablation_config(base: &TrainConfig, variant: &str) -> Result<TrainConfig, Error> {
    let mut cfg = base.clone();
    match variant {
        "full" => {}
        "no_augmentation" => cfg.use_augmentation = false,
        "no_auxiliary" => cfg.use_auxiliary = false,
        "no_language_model" => cfg.use_llm = false,
        "weights_from_all" => cfg.weights_from_all = true,
        other => {
            return Err(Error::Config(format!(
                "unknown ablation variant {other:?} (expected one of {ABLATION_VARIANTS:?})"
            )))
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub best_epoch: usize,
    pub val: MetricReport,
    pub train_accuracy: f64,
}

/// Train every variant with the same master seed; one row per variant in
/// `ablation.csv`, artifacts per variant under `out_dir/<variant>/`.
pub fn run_ablation_suite(
    records: &[TrialRecord],
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    base: &TrainConfig,
    out_dir: &Path,
) -> Result<Vec<AblationRow>, Error> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(ABLATION_VARIANTS.len());
    for variant in ABLATION_VARIANTS {
        let cfg = ablation_config(base, variant)?;
        let outcome = train(records, client, cache, &cfg, &out_dir.join(variant))?;
        rows.push(AblationRow {
            variant: variant.to_string(),
            best_epoch: outcome.best_epoch,
            val: outcome.best_val,
            train_accuracy: outcome.final_train.accuracy,
        });
    }
    let mut csv = String::from("variant,val_pr_auc,val_f1,val_roc_auc,val_accuracy,train_accuracy\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.variant, row.val.pr_auc, row.val.f1, row.val.roc_auc, row.val.accuracy,
            row.train_accuracy
        ));
    }
    std::fs::write(out_dir.join(ABLATION_FILE), csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepStats {
    pub mean: f64,
    pub sd: f64,
}

fn mean_sd(values: &[f64]) -> SweepStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    SweepStats { mean, sd }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSweep {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricReport>,
    pub pr_auc: SweepStats,
    pub f1: SweepStats,
    pub roc_auc: SweepStats,
}

/// Train once per seed (seeds `base.seed .. base.seed + n_seeds`) and
/// aggregate the best validation metrics; writes `seed_sweep.json`.
pub fn run_seed_sweep(
    records: &[TrialRecord],
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    base: &TrainConfig,
    n_seeds: usize,
    out_dir: &Path,
) -> Result<SeedSweep, Error> {
    if n_seeds == 0 {
        return Err(Error::Config("seed sweep needs at least one seed".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut seeds = Vec::with_capacity(n_seeds);
    let mut per_seed = Vec::with_capacity(n_seeds);
    for k in 0..n_seeds {
        let mut cfg = base.clone();
        cfg.seed = base.seed + k as u64;
        let outcome = train(
            records,
            client,
            cache,
            &cfg,
            &out_dir.join(format!("seed_{}", cfg.seed)),
        )?;
        seeds.push(cfg.seed);
        per_seed.push(outcome.best_val);
    }
    let sweep = SeedSweep {
        pr_auc: mean_sd(&per_seed.iter().map(|r| r.pr_auc).collect::<Vec<_>>()),
        f1: mean_sd(&per_seed.iter().map(|r| r.f1).collect::<Vec<_>>()),
        roc_auc: mean_sd(&per_seed.iter().map(|r| r.roc_auc).collect::<Vec<_>>()),
        seeds,
        per_seed,
    };
    std::fs::write(out_dir.join(SWEEP_FILE), serde_json::to_vec_pretty(&sweep)?)?;
    Ok(sweep)
}

/// Evaluate a saved model on records, returning metrics and predictions.
pub fn evaluate(
    model: &Model,
    records: &[TrialRecord],
    client: &dyn LlmClient,
    cache: Option<&DescriptionCache>,
    threshold: f64,
    batch_size: usize,
) -> Result<(MetricReport, Vec<f64>), Error> {
    let (prepped, _) = prep_for_model(model, records, client, cache, 1, None)?;
    let probs = model.predict(&prepped, batch_size)?;
    let labels: Vec<u8> = prepped.iter().map(|t| t.label).collect();
    let report = compute_metrics(&probs, &labels, threshold)?;
    Ok((report, probs))
}

/// Train-split accuracy helper used by reports.
pub fn split_accuracy(
    model: &Model,
    trials: &[PreppedTrial],
    threshold: f64,
    batch_size: usize,
) -> Result<f64, Error> {
    let probs = model.predict(trials, batch_size)?;
    let labels: Vec<u8> = trials.iter().map(|t| t.label).collect();
    accuracy(&probs, &labels, threshold)
}
