//! The `cobra` command line: synthesis, training, evaluation, embedding
//! export and gradient checking.
//!
//! Settings resolve as flags over `--config` file over built-in defaults.
//! Machine-readable records go to stdout, progress to stderr.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
//! 3 I/O or file-format error, 4 numeric halt.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    generate_synthetic, load_manifest, parse_key_values, split, write_feature_file, Manifest,
    PairedDataset, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{classification_accuracy, evaluate_retrieval, export_embeddings, RetrievalOptions, ZeroRelevant};
use crate::gradcheck::{run_gradcheck, GradcheckOptions};
use crate::losses::{ContrastiveVariant, NceForm, Reduction, ScoreMode};
use crate::model::{load_checkpoint, load_head, save_checkpoint, save_head};
use crate::training::{format_sig, train, train_classifier, HeadConfig, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const IMAGE_FILE: &str = "image.feat";
pub const TEXT_FILE: &str = "text.feat";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const HEAD_CHECKPOINT: &str = "head.ckpt";
pub const RUN_LOG: &str = "run.log";
pub const EFFECTIVE_CONFIG: &str = "effective.conf";

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Format { .. } | Error::TextFormat { .. } | Error::UnsupportedVersion { .. } => EXIT_IO,
        Error::NumericHalt { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "cobra", version, about = "Contrastive bi-modal representation learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired dataset with a manifest.
    Synth(SynthArgs),
    /// Train the joint embedding (and the classifier head).
    Train(TrainArgs),
    /// Cross-modal retrieval mAP in both directions.
    EvalRetrieval(EvalArgs),
    /// Accuracy of a trained classifier head.
    EvalClassify(ClassifyArgs),
    /// Export joint embeddings of both modalities.
    Embed(EvalArgs),
    /// Finite-difference check of every layer and loss term.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key=value` settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub image_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub text_dim: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
}

/// Flags that select the data split; shared by training and evaluation.
#[derive(Debug, Args, Clone, Default)]
pub struct SplitArgs {
    /// Train/val/test fractions, e.g. `0.8,0.1,0.1`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub iters_per_epoch: Option<usize>,
    #[arg(long)]
    pub lambda_r: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_m: Option<f64>,
    #[arg(long)]
    pub lambda_c: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub sets_per_batch: Option<usize>,
    #[arg(long, value_parser = ["setform", "nce"])]
    pub contrastive: Option<String>,
    #[arg(long, value_parser = ["exp", "literal"])]
    pub score_mode: Option<String>,
    #[arg(long, value_parser = ["log", "literal"])]
    pub nce_form: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_parser = ["mean", "sum"])]
    pub reduction: Option<String>,
    /// Comma-separated encoder hidden widths.
    #[arg(long)]
    pub encoder_hidden: Option<String>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub decoder_hidden: Option<String>,
    #[arg(long)]
    pub shared_projection: bool,
    /// Train the classifier jointly with the embedding.
    #[arg(long)]
    pub joint_head: bool,
    /// Skip the second-stage classifier.
    #[arg(long)]
    pub no_head: bool,
    #[arg(long)]
    pub head_eta: Option<f64>,
    #[arg(long)]
    pub head_epochs: Option<usize>,
    #[arg(long)]
    pub head_batch: Option<usize>,
    #[arg(long)]
    pub head_hidden: Option<String>,
    #[arg(long)]
    pub head_dropout: Option<String>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Validation data; when given the whole `--manifest` is used for training.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which part of the manifest to use.
    #[arg(long, default_value = "all", value_parser = ["train", "val", "test", "all"])]
    pub eval: String,
    /// Truncate rankings at this depth.
    #[arg(long)]
    pub map_at: Option<usize>,
    #[arg(long, value_parser = ["exclude", "zero"])]
    pub zero_relevant: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub head: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 6)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Perturb the analytic gradient of the named check.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

/// Fully resolved settings of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub head: HeadConfig,
    /// Train a classifier on the frozen embedding after the main loop.
    pub two_stage_head: bool,
    pub split: [f64; 3],
    pub split_seed: u64,
    pub retrieval: RetrievalOptions,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            head: HeadConfig::default(),
            two_stage_head: true,
            split: [0.8, 0.1, 0.1],
            split_seed: 0,
            retrieval: RetrievalOptions::default(),
        }
    }
}

/// Keys accepted by `--config` files and written to `effective.conf`.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "eta",
    "epochs",
    "batch",
    "iters_per_epoch",
    "lambda_r",
    "lambda_s",
    "lambda_m",
    "lambda_c",
    "negatives",
    "sets_per_batch",
    "contrastive",
    "score_mode",
    "nce_form",
    "temperature",
    "reduction",
    "encoder_hidden",
    "latent_dim",
    "decoder_hidden",
    "shared_projection",
    "joint_head",
    "two_stage_head",
    "head_eta",
    "head_epochs",
    "head_batch",
    "head_hidden",
    "head_dropout",
    "checkpoint_every",
    "split",
    "split_seed",
    "map_at",
    "zero_relevant",
];

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value `{value}` for `{key}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn opt_num(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "none" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_text(v: Option<usize>) -> String {
    v.map_or_else(|| "none".into(), |k| k.to_string())
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let w = &mut t.loss.weights;
        match key {
            "seed" => {
                t.seed = num(key, value)?;
                self.head.seed = t.seed;
            }
            "eta" => t.eta = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "batch" => {
                t.batch_image = num(key, value)?;
                t.batch_text = t.batch_image;
            }
            "iters_per_epoch" => t.iters_per_epoch = opt_num(key, value)?,
            "lambda_r" => w.lambda_r = num(key, value)?,
            "lambda_s" => w.lambda_s = num(key, value)?,
            "lambda_m" => w.lambda_m = num(key, value)?,
            "lambda_c" => w.lambda_c = num(key, value)?,
            "negatives" => t.n_negatives = num(key, value)?,
            "sets_per_batch" => t.sets_per_batch = opt_num(key, value)?,
            "contrastive" => t.loss.variant = value.parse()?,
            "score_mode" => t.loss.score_mode = value.parse()?,
            "nce_form" => t.loss.nce_form = value.parse()?,
            "temperature" => t.loss.temperature = num(key, value)?,
            "reduction" => t.loss.reduction = value.parse()?,
            "encoder_hidden" => t.architecture.encoder_hidden = list(key, value)?,
            "latent_dim" => t.architecture.latent_dim = num(key, value)?,
            "decoder_hidden" => t.architecture.decoder_hidden = list(key, value)?,
            "shared_projection" => t.architecture.shared_projection = flag(key, value)?,
            "joint_head" => t.joint_head = flag(key, value)?,
            "two_stage_head" => self.two_stage_head = flag(key, value)?,
            "head_eta" => self.head.eta = num(key, value)?,
            "head_epochs" => self.head.epochs = num(key, value)?,
            "head_batch" => self.head.batch = num(key, value)?,
            "head_hidden" => self.head.architecture.hidden = list(key, value)?,
            "head_dropout" => self.head.architecture.dropout = list(key, value)?,
            "checkpoint_every" => t.checkpoint_every = opt_num(key, value)?,
            "split" => {
                let v: Vec<f64> = list(key, value)?;
                self.split = v.try_into().map_err(|_| bad(key, value))?;
            }
            "split_seed" => self.split_seed = num(key, value)?,
            "map_at" => self.retrieval.map_at = opt_num(key, value)?,
            "zero_relevant" => self.retrieval.zero_relevant = value.parse()?,
            _ => return Err(Error::Config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// One `key=value` line per entry of [`CONFIG_KEYS`]; parses back to the
    /// same settings.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let w = &t.loss.weights;
        let a = &t.architecture;
        let values: Vec<(&str, String)> = vec![
            ("seed", t.seed.to_string()),
            ("eta", t.eta.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch", t.batch_image.to_string()),
            ("iters_per_epoch", opt_text(t.iters_per_epoch)),
            ("lambda_r", w.lambda_r.to_string()),
            ("lambda_s", w.lambda_s.to_string()),
            ("lambda_m", w.lambda_m.to_string()),
            ("lambda_c", w.lambda_c.to_string()),
            ("negatives", t.n_negatives.to_string()),
            ("sets_per_batch", opt_text(t.sets_per_batch)),
            ("contrastive", variant_name(t.loss.variant).into()),
            ("score_mode", score_mode_name(t.loss.score_mode).into()),
            ("nce_form", nce_form_name(t.loss.nce_form).into()),
            ("temperature", t.loss.temperature.to_string()),
            ("reduction", reduction_name(t.loss.reduction).into()),
            ("encoder_hidden", join(&a.encoder_hidden)),
            ("latent_dim", a.latent_dim.to_string()),
            ("decoder_hidden", join(&a.decoder_hidden)),
            ("shared_projection", a.shared_projection.to_string()),
            ("joint_head", t.joint_head.to_string()),
            ("two_stage_head", self.two_stage_head.to_string()),
            ("head_eta", self.head.eta.to_string()),
            ("head_epochs", self.head.epochs.to_string()),
            ("head_batch", self.head.batch.to_string()),
            ("head_hidden", join(&self.head.architecture.hidden)),
            ("head_dropout", join(&self.head.architecture.dropout)),
            ("checkpoint_every", opt_text(t.checkpoint_every)),
            ("split", join(&self.split)),
            ("split_seed", self.split_seed.to_string()),
            ("map_at", opt_text(self.retrieval.map_at)),
            ("zero_relevant", zero_relevant_name(self.retrieval.zero_relevant).into()),
        ];
        debug_assert_eq!(values.len(), CONFIG_KEYS.len());
        let mut out = String::new();
        for (k, v) in values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Defaults, then the config file, then `flags` in order.
    pub fn resolve(config: Option<&Path>, flags: &[(&str, String)]) -> Result<Self> {
        let mut s = Self::default();
        if let Some(path) = config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let kv = parse_key_values(&text, path, CONFIG_KEYS).map_err(|e| Error::Config(e.to_string()))?;
            for (k, v) in kv {
                s.set(&k, &v)?;
            }
        }
        for (k, v) in flags {
            s.set(k, v)?;
        }
        Ok(s)
    }
}

fn variant_name(v: ContrastiveVariant) -> &'static str {
    match v {
        ContrastiveVariant::SetForm => "setform",
        ContrastiveVariant::Nce => "nce",
    }
}

fn score_mode_name(m: ScoreMode) -> &'static str {
    match m {
        ScoreMode::Exp => "exp",
        ScoreMode::Literal => "literal",
    }
}

fn nce_form_name(f: NceForm) -> &'static str {
    match f {
        NceForm::Log => "log",
        NceForm::Literal => "literal",
    }
}

fn reduction_name(r: Reduction) -> &'static str {
    match r {
        Reduction::Mean => "mean",
        Reduction::Sum => "sum",
    }
}

fn zero_relevant_name(z: ZeroRelevant) -> &'static str {
    match z {
        ZeroRelevant::Exclude => "exclude",
        ZeroRelevant::Zero => "zero",
    }
}

fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

fn common_flags(c: &CommonArgs, s: &SplitArgs) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    push(&mut out, "seed", &c.seed);
    push(&mut out, "split", &s.split);
    push(&mut out, "split_seed", &s.split_seed);
    out
}

fn train_flags(f: &TrainFlags, out: &mut Vec<(&'static str, String)>) {
    push(out, "eta", &f.eta);
    push(out, "epochs", &f.epochs);
    push(out, "batch", &f.batch);
    push(out, "iters_per_epoch", &f.iters_per_epoch);
    push(out, "lambda_r", &f.lambda_r);
    push(out, "lambda_s", &f.lambda_s);
    push(out, "lambda_m", &f.lambda_m);
    push(out, "lambda_c", &f.lambda_c);
    push(out, "negatives", &f.negatives);
    push(out, "sets_per_batch", &f.sets_per_batch);
    push(out, "contrastive", &f.contrastive);
    push(out, "score_mode", &f.score_mode);
    push(out, "nce_form", &f.nce_form);
    push(out, "temperature", &f.temperature);
    push(out, "reduction", &f.reduction);
    push(out, "encoder_hidden", &f.encoder_hidden);
    push(out, "latent_dim", &f.latent_dim);
    push(out, "decoder_hidden", &f.decoder_hidden);
    if f.shared_projection {
        out.push(("shared_projection", "true".into()));
    }
    if f.joint_head {
        out.push(("joint_head", "true".into()));
    }
    if f.no_head {
        out.push(("two_stage_head", "false".into()));
    }
    push(out, "head_eta", &f.head_eta);
    push(out, "head_epochs", &f.head_epochs);
    push(out, "head_batch", &f.head_batch);
    push(out, "head_hidden", &f.head_hidden);
    push(out, "head_dropout", &f.head_dropout);
    push(out, "checkpoint_every", &f.checkpoint_every);
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| Error::Config(format!("missing required flag --{flag}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command; `Ok` carries the exit code of a completed command.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::EvalRetrieval(a) => cmd_eval_retrieval(&a, out),
        Command::EvalClassify(a) => cmd_eval_classify(&a, out),
        Command::Embed(a) => cmd_embed(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
    }
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<i32> {
    if a.common.manifest.is_some() || a.common.config.is_some() {
        return Err(Error::Config("synth takes neither --manifest nor --config".into()));
    }
    let dir = require(&a.common.out, "out")?;
    let spec = SyntheticSpec {
        classes: a.classes,
        image_dim: a.image_dim,
        text_dim: a.text_dim,
        per_class: a.per_class,
        latent_dim: a.latent_dim,
        sigma: a.sigma,
        separation: a.separation,
        seed: a.common.seed.unwrap_or(0),
    };
    let pairs = generate_synthetic(&spec)?;
    create_dir(dir)?;
    write_feature_file(&pairs.image, &dir.join(IMAGE_FILE))?;
    write_feature_file(&pairs.text, &dir.join(TEXT_FILE))?;
    Manifest {
        name: Some("synthetic".into()),
        image_file: IMAGE_FILE.into(),
        text_file: TEXT_FILE.into(),
    }
    .write(&dir.join(MANIFEST_FILE))?;
    emit(
        out,
        &format!(
            "synth classes={} pairs={} dI={} dT={}",
            spec.classes,
            pairs.n_pairs(),
            spec.image_dim,
            spec.text_dim
        ),
    )?;
    Ok(EXIT_OK)
}

fn split_data(data: &PairedDataset, s: &Settings) -> Result<(PairedDataset, PairedDataset, PairedDataset)> {
    split(data, s.split, s.split_seed)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let mut flags = common_flags(&a.common, &a.split);
    train_flags(&a.train, &mut flags);
    let settings = Settings::resolve(a.common.config.as_deref(), &flags)?;
    settings.train.validate()?;
    let manifest = require(&a.common.manifest, "manifest")?;
    let dir = require(&a.common.out, "out")?;

    let (_, data) = load_manifest(manifest)?;
    let (train_data, val_data) = match &a.val_manifest {
        Some(v) => (data, load_manifest(v)?.1),
        None => {
            let (tr, va, _) = split_data(&data, &settings)?;
            (tr, va)
        }
    };
    create_dir(dir)?;
    let conf = dir.join(EFFECTIVE_CONFIG);
    fs::write(&conf, settings.to_text()).map_err(|e| Error::io(&conf, e))?;
    log::info!(
        "training on {} pairs, validating on {}, {} epochs",
        train_data.n_pairs(),
        val_data.n_pairs(),
        settings.train.epochs
    );

    let log_path = dir.join(RUN_LOG);
    let mut log_text = String::new();
    let result = train::<f32>(&train_data, &val_data, &settings.train, Some(dir), &mut |r| {
        let line = r.record();
        log::info!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
    });
    fs::write(&log_path, &log_text).map_err(|e| Error::io(&log_path, e))?;
    let outcome = result?;
    save_checkpoint(&outcome.model, &dir.join(FINAL_CHECKPOINT))?;

    let head = if let Some(h) = &outcome.head {
        Some(h.clone())
    } else if settings.two_stage_head {
        log::info!("training classifier head for {} epochs", settings.head.epochs);
        let head_cfg = HeadConfig {
            num_task_classes: Some(train_data.num_classes()),
            ..settings.head.clone()
        };
        Some(train_classifier(&outcome.model, &train_data, train_data.labels(), &head_cfg)?)
    } else {
        None
    };
    if let Some(h) = &head {
        save_head(h, &dir.join(HEAD_CHECKPOINT))?;
    }
    let last = outcome.reports.last().map_or(f64::NAN, |r| r.total);
    emit(
        out,
        &format!(
            "train epochs={} best_epoch={} best_val_total={} final_total={}",
            outcome.reports.len(),
            outcome.best_epoch,
            format_sig(outcome.best_val_loss, 6),
            format_sig(last, 6)
        ),
    )?;
    Ok(EXIT_OK)
}

fn eval_data(a: &EvalArgs) -> Result<(Settings, PairedDataset)> {
    let mut flags = common_flags(&a.common, &a.split);
    push(&mut flags, "map_at", &a.map_at);
    push(&mut flags, "zero_relevant", &a.zero_relevant);
    let settings = Settings::resolve(a.common.config.as_deref(), &flags)?;
    let (_, data) = load_manifest(require(&a.common.manifest, "manifest")?)?;
    let part = match a.eval.as_str() {
        "all" => data,
        which => {
            let (tr, va, te) = split_data(&data, &settings)?;
            match which {
                "train" => tr,
                "val" => va,
                _ => te,
            }
        }
    };
    Ok((settings, part))
}

fn cmd_eval_retrieval(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let (settings, data) = eval_data(a)?;
    let model = load_checkpoint::<f32>(&a.checkpoint)?;
    let report = evaluate_retrieval(&model, &data, &settings.retrieval)?;
    for line in report.records() {
        emit(out, &line)?;
    }
    Ok(EXIT_OK)
}

fn cmd_eval_classify(a: &ClassifyArgs, out: &mut dyn Write) -> Result<i32> {
    let (_, data) = eval_data(&a.eval)?;
    let model = load_checkpoint::<f32>(&a.eval.checkpoint)?;
    let head = load_head::<f32>(&a.head)?;
    let acc = classification_accuracy(&head, &model, &data, data.labels())?;
    emit(out, &format!("accuracy={acc:.5} n={}", data.n_pairs()))?;
    Ok(EXIT_OK)
}

fn cmd_embed(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let (_, data) = eval_data(a)?;
    let dir = require(&a.common.out, "out")?;
    let model = load_checkpoint::<f32>(&a.checkpoint)?;
    export_embeddings(&model, &data, dir)?;
    emit(out, &format!("embed n={} dim={}", data.n_pairs(), model.joint_dim()))?;
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let opts = GradcheckOptions {
        dim: a.dim,
        batch: a.batch,
        classes: a.classes,
        epsilon: a.epsilon,
        tolerance: a.tolerance,
        seed: a.common.seed.unwrap_or(0),
        corrupt: a.corrupt.clone(),
    };
    let report = run_gradcheck(&opts)?;
    for line in report.records() {
        emit(out, &line)?;
    }
    let failures = report.failures();
    emit(
        out,
        &format!(
            "gradcheck checks={} failed={} max_rel_err={:.3e}",
            report.checks.len(),
            failures.len(),
            report.max_rel_err()
        ),
    )?;
    if failures.is_empty() {
        Ok(EXIT_OK)
    } else {
        let names: Vec<&str> = failures.iter().map(|c| c.name.as_str()).collect();
        eprintln!("gradient check failed: {}", names.join(", "));
        Ok(EXIT_CHECK_FAILED)
    }
}
