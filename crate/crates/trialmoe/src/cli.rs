//! Command-line interface: dataset synthesis, the describe stage, training,
//! evaluation, the component-removal grid, and checkpoint inspection.
//!
//! Exit codes: 0 on success (including `--help`/`--version`), 1 for usage
//! errors, 2 for data/config/IO failures, 3 when training aborts on a
//! non-finite loss.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::cache::DescriptionCache;
use crate::data::describe::{describe_all, DescribeOptions};
use crate::data::llm::{HttpLlm, LlmClient, RecordingLlm, ReplayLlm, StubLlm};
use crate::data::record::{read_jsonl, write_jsonl, ModalityKind};
use crate::data::synthetic::{generate, SignalSpec};
use crate::error::Error;
use crate::model::{ForwardOpts, Model, PreppedTrial};
use crate::train::{
    self, prep_for_model, run_ablation_suite, run_seed_sweep, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "trialmoe",
    version,
    about = "Multimodal clinical-trial outcome prediction with a shared mixture of experts",
    long_about = "Turns every trial modality (diseases, drugs, description, eligibility \
criteria, molecule strings, and an optional model-written summary) into text, encodes \
each with its own transformer, refines the representations with a shared sparse \
mixture of experts, and fuses them with disease-conditioned weights to predict the \
trial outcome."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmMode {
    /// Deterministic offline text, no network.
    Stub,
    /// Replay completions from a cassette file; unseen prompts fail.
    Replay,
    /// A chat-completions HTTP endpoint (see LLM_ENDPOINT, LLM_MODEL,
    /// LLM_API_KEY).
    Http,
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    /// Language-model client for the describe stage.
    #[arg(long, value_enum, default_value_t = LlmMode::Stub)]
    pub llm: LlmMode,
    /// Cassette file: the source of completions for --llm replay; with
    /// stub/http, every fresh completion is appended here for later replay.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Directory for the on-disk description cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

impl LlmArgs {
    pub fn client(&self) -> Result<Box<dyn LlmClient>, Error> {
        match (self.llm, self.cassette.as_deref()) {
            (LlmMode::Replay, Some(path)) => Ok(Box::new(ReplayLlm::load(path)?)),
            (LlmMode::Replay, None) => Err(Error::Config(
                "--llm replay requires --cassette <file>".into(),
            )),
            (LlmMode::Stub, Some(path)) => {
                Ok(Box::new(RecordingLlm::create(StubLlm::new(), path)?))
            }
            (LlmMode::Stub, None) => Ok(Box::new(StubLlm::new())),
            (LlmMode::Http, Some(path)) => {
                Ok(Box::new(RecordingLlm::create(HttpLlm::from_env(), path)?))
            }
            (LlmMode::Http, None) => Ok(Box::new(HttpLlm::from_env())),
        }
    }

    pub fn open_cache(&self) -> Result<Option<DescriptionCache>, Error> {
        self.cache
            .as_deref()
            .map(DescriptionCache::open)
            .transpose()
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled trial dataset with a plantable signal.
    Synth(SynthArgs),
    /// Run the text stage alone: describe every modality of every trial.
    Describe(DescribeArgs),
    /// Train a predictor and write its artifacts.
    Train(TrainArgs),
    /// Score a saved model on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Retrain with individual components disabled and compare.
    Ablate(AblateArgs),
    /// Summarize a saved model directory.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output JSONL path.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of trials (labels alternate, so the set is balanced).
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Modality that carries the planted outcome marker.
    #[arg(long, default_value = "diseases")]
    pub signal_modality: String,
    /// Marker token planted on successful trials.
    #[arg(long, default_value = "localized")]
    pub success_token: String,
    /// Marker token planted on failed trials.
    #[arg(long, default_value = "refractory")]
    pub failure_token: String,
    /// Probability that the marker agrees with the label.
    #[arg(long, default_value_t = 1.0)]
    pub reliability: f64,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    /// Input JSONL of trial records.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional output JSONL (one row per trial modality).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// Skip the language model: passthrough text, no summary modality.
    #[arg(long)]
    pub no_llm: bool,
    /// File whose contents replace the built-in JSON schema in prompts.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Worker threads for the describe stage.
    #[arg(long, default_value_t = 1)]
    pub fanout: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input JSONL of labeled trial records.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints and reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Training configuration (.toml or .json); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// Override the master seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the epoch count from the config.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Disable perturbation augmentation and the consistency term.
    #[arg(long)]
    pub no_aug: bool,
    /// Disable the per-modality auxiliary losses.
    #[arg(long)]
    pub no_aux: bool,
    /// Drop the model-written summary modality (source fields only).
    #[arg(long)]
    pub no_llm: bool,
    /// Condition fusion weights on all modalities, not only diseases.
    #[arg(long)]
    pub gating_all: bool,
    /// Train once per seed (config seed, +1, ...) and report mean and
    /// standard deviation of the best validation metrics.
    #[arg(long)]
    pub seeds: Option<usize>,
}

impl TrainArgs {
    fn resolve_config(&self) -> Result<TrainConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::from_file(path)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        if self.no_aug {
            cfg.use_augmentation = false;
        }
        if self.no_aux {
            cfg.use_auxiliary = false;
        }
        if self.no_llm {
            cfg.use_llm = false;
        }
        if self.gating_all {
            cfg.weights_from_all = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Saved model directory (the `best/` directory of a training run).
    #[arg(long)]
    pub model: PathBuf,
    /// Input JSONL of labeled trial records.
    #[arg(long)]
    pub data: PathBuf,
    /// Decision threshold for F1 and accuracy.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// Write the metric report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-trial fusion weights as JSONL here.
    #[arg(long)]
    pub dump_weights: Option<PathBuf>,
    /// Batch size for inference.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Input JSONL of labeled trial records.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory; each variant trains under its own subdirectory.
    #[arg(long)]
    pub out: PathBuf,
    /// Training configuration shared by every variant.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// Override the master seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the epoch count from the config.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Saved model directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Emit machine-readable JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

pub fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Describe(args) => run_describe(args),
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Ablate(args) => run_ablate(args),
        Command::Inspect(args) => run_inspect(args),
    }
}

fn run_synth(args: SynthArgs) -> Result<(), Error> {
    let modality = ModalityKind::from_name(&args.signal_modality).ok_or_else(|| {
        Error::Config(format!(
            "unknown modality {:?}; expected one of {:?}",
            args.signal_modality,
            ModalityKind::SOURCE
                .iter()
                .map(|k| k.name())
                .collect::<Vec<_>>()
        ))
    })?;
    let spec = SignalSpec {
        modality,
        success_token: args.success_token,
        failure_token: args.failure_token,
        reliability: args.reliability,
    };
    let records = generate(args.n, args.seed, &spec)?;
    write_jsonl(&args.out, &records)?;
    println!(
        "wrote {} records to {} (signal: {} in {}, reliability {})",
        records.len(),
        args.out.display(),
        spec.success_token,
        spec.modality.name(),
        spec.reliability
    );
    Ok(())
}

fn run_describe(args: DescribeArgs) -> Result<(), Error> {
    let records = read_jsonl(&args.data)?;
    let client = args.llm.client()?;
    let cache = args.llm.open_cache()?;
    let mut opts = DescribeOptions {
        use_llm: !args.no_llm,
        fanout: args.fanout.max(1),
        ..DescribeOptions::default()
    };
    if let Some(schema_path) = &args.schema {
        opts.schema = std::fs::read_to_string(schema_path)?;
    }
    let (texts, stats) = describe_all(client.as_ref(), cache.as_ref(), &records, &opts)?;

    if let Some(out) = &args.out {
        let mut lines = String::new();
        for (record, trial) in records.iter().zip(&texts) {
            for t in trial {
                lines.push_str(&serde_json::to_string(&serde_json::json!({
                    "id": record.id,
                    "modality": t.kind.name(),
                    "provenance": format!("{:?}", t.provenance).to_lowercase(),
                    "text": t.text,
                }))?);
                lines.push('\n');
            }
        }
        std::fs::write(out, lines)?;
        println!("wrote descriptions to {}", out.display());
    }
    let n_texts: usize = texts.iter().map(|t| t.len()).sum();
    println!(
        "described {} trials ({} texts); client calls {}, cache hits {}",
        records.len(),
        n_texts,
        stats.client_calls,
        stats.cache_hits
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), Error> {
    let records = read_jsonl(&args.data)?;
    let cfg = args.resolve_config()?;
    let client = args.llm.client()?;
    let cache = args.llm.open_cache()?;

    if let Some(n_seeds) = args.seeds {
        let sweep = run_seed_sweep(
            &records,
            client.as_ref(),
            cache.as_ref(),
            &cfg,
            n_seeds,
            &args.out,
        )?;
        println!("seed sweep over {:?}:", sweep.seeds);
        println!(
            "  pr_auc  {:.4} ± {:.4}",
            sweep.pr_auc.mean, sweep.pr_auc.sd
        );
        println!("  f1      {:.4} ± {:.4}", sweep.f1.mean, sweep.f1.sd);
        println!(
            "  roc_auc {:.4} ± {:.4}",
            sweep.roc_auc.mean, sweep.roc_auc.sd
        );
        println!("details in {}", args.out.join(train::SWEEP_FILE).display());
        return Ok(());
    }

    let outcome = train::train(&records, client.as_ref(), cache.as_ref(), &cfg, &args.out)?;
    for row in &outcome.rows {
        println!(
            "epoch {:>3}: loss_c {:.4}  loss_con {:.4}  loss_aux {:.4}  val pr_auc {:.4}  f1 {:.4}  roc_auc {:.4}",
            row.epoch, row.loss_c, row.loss_con, row.loss_aux, row.val_pr_auc, row.val_f1,
            row.val_roc_auc
        );
    }
    println!(
        "best epoch {} (val pr_auc {:.4}); train accuracy {:.4}; {:.1}s",
        outcome.best_epoch,
        outcome.best_val.pr_auc,
        outcome.final_train.accuracy,
        outcome.elapsed_seconds
    );
    println!(
        "checkpoint: {}",
        args.out.join(train::BEST_DIR).display()
    );
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let model = Model::load(&args.model)?;
    let records = read_jsonl(&args.data)?;
    let client = args.llm.client()?;
    let cache = args.llm.open_cache()?;
    let (prepped, _) = prep_for_model(
        &model,
        &records,
        client.as_ref(),
        cache.as_ref(),
        1,
        None,
    )?;
    let probs = model.predict(&prepped, args.batch_size)?;
    let labels: Vec<u8> = prepped.iter().map(|t| t.label).collect();
    let report = crate::eval::compute_metrics(&probs, &labels, args.threshold)?;

    println!(
        "n {}  pr_auc {:.4}  f1 {:.4}  roc_auc {:.4}  accuracy {:.4} (threshold {})",
        report.n, report.pr_auc, report.f1, report.roc_auc, report.accuracy, report.threshold
    );
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_vec_pretty(&report)?)?;
        println!("report written to {}", out.display());
    }
    if let Some(path) = &args.dump_weights {
        dump_fusion_weights(&model, &prepped, &probs, args.batch_size, path)?;
        println!("fusion weights written to {}", path.display());
    }
    Ok(())
}

/// One JSONL row per trial: id, label, predicted probability, and the
/// fusion weight assigned to each modality.
fn dump_fusion_weights(
    model: &Model,
    prepped: &[PreppedTrial],
    probs: &[f64],
    batch_size: usize,
    path: &Path,
) -> Result<(), Error> {
    let mut opts = ForwardOpts::eval();
    opts.collect_details = true;
    let mut lines = String::new();
    let mut offset = 0usize;
    for chunk in prepped.chunks(batch_size.max(1)) {
        let refs: Vec<&PreppedTrial> = chunk.iter().collect();
        let out = model.run_batch(&refs, &opts)?;
        let details = out.details.expect("details requested");
        for (k, trial) in chunk.iter().enumerate() {
            let mut weights = serde_json::Map::new();
            for (kind, w) in model.cfg.modalities.iter().zip(&details.fusion_weights[k]) {
                weights.insert(kind.name().to_string(), serde_json::json!(w));
            }
            lines.push_str(&serde_json::to_string(&serde_json::json!({
                "id": trial.id,
                "label": trial.label,
                "prob": probs[offset + k],
                "weights": weights,
            }))?);
            lines.push('\n');
        }
        offset += chunk.len();
    }
    std::fs::write(path, lines)?;
    Ok(())
}

fn run_ablate(args: AblateArgs) -> Result<(), Error> {
    let records = read_jsonl(&args.data)?;
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    let client = args.llm.client()?;
    let cache = args.llm.open_cache()?;
    let rows = run_ablation_suite(&records, client.as_ref(), cache.as_ref(), &cfg, &args.out)?;
    println!(
        "{:<20} {:>8} {:>8} {:>8} {:>9} {:>10}",
        "variant", "pr_auc", "f1", "roc_auc", "val_acc", "train_acc"
    );
    for row in &rows {
        println!(
            "{:<20} {:>8.4} {:>8.4} {:>8.4} {:>9.4} {:>10.4}",
            row.variant,
            row.val.pr_auc,
            row.val.f1,
            row.val.roc_auc,
            row.val.accuracy,
            row.train_accuracy
        );
    }
    println!(
        "table written to {}",
        args.out.join(train::ABLATION_FILE).display()
    );
    Ok(())
}

fn run_inspect(args: InspectArgs) -> Result<(), Error> {
    let model = Model::load(&args.model)?;
    let manifest = autograd::checkpoint::read_manifest(&args.model)?;
    let groups = model.param_groups();
    let total_values: usize = groups.iter().map(|(_, _, v)| v).sum();

    if args.json {
        let group_json: Vec<serde_json::Value> = groups
            .iter()
            .map(|(g, t, v)| serde_json::json!({"group": g, "tensors": t, "values": v}))
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "config": model.cfg,
                "config_hash": manifest.config_hash,
                "parameter_groups": group_json,
                "total_values": total_values,
            }))?
        );
        return Ok(());
    }

    println!("model at {}", args.model.display());
    println!("  config hash: {}", manifest.config_hash);
    println!(
        "  modalities: {}",
        model
            .cfg
            .modalities
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!(
        "  encoder: d_model {}, {} layers, {} heads, ff {}, dropout {}",
        model.cfg.encoder.d_model,
        model.cfg.encoder.n_layers,
        model.cfg.encoder.n_heads,
        model.cfg.encoder.d_ff,
        model.cfg.encoder.dropout
    );
    println!(
        "  experts: {} total, top-{} active, width {}",
        model.cfg.smoe.n_experts, model.cfg.smoe.top_k, model.cfg.smoe.d_expert
    );
    println!(
        "  fusion conditioning: {:?}; separate auxiliary heads: {}",
        model.cfg.weighting, model.cfg.separate_heads
    );
    println!(
        "  vocabulary: {} text tokens, {} chemical tokens",
        model.cfg.text_vocab_size, model.cfg.smiles_vocab_size
    );
    println!("  parameters ({total_values} values):");
    for (group, tensors, values) in &groups {
        println!("    {group:<18} {tensors:>3} tensors {values:>9} values");
    }
    Ok(())
}
