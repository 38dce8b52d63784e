//! Command-line front end.
//!
//! Every subcommand takes `--seed` and, optionally, `--config FILE`. The
//! file is TOML whose keys are flag names (`projection_dim` or
//! `projection-dim`); top-level keys apply to any subcommand that has the
//! flag and a `[subcommand]` table applies to that subcommand only. Flags on
//! the command line override the file.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgAction, ArgGroup, Args, CommandFactory, Parser, Subcommand};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::data::DataError;
use crate::eval::EvalError;
use crate::model::ModelError;
use crate::tensor::TensorError;
use crate::train::TrainError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, files or data: exit code 1.
    #[error("{0}")]
    Invalid(String),
    /// A failure of the engine itself: exit code 2.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_USAGE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => t.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Tensor(t) => t.into(),
            TrainError::Data(d) => d.into(),
            TrainError::Eval(v) => v.into(),
            TrainError::GradShape { .. } => CliError::Internal(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            EvalError::Data(d) => d.into(),
            EvalError::NaNScore(_) => CliError::Internal(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// Comma-separated layer widths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layers(pub Vec<usize>);

impl fmt::Display for Layers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Layers {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad layer width {p:?}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Layers)
    }
}

impl Serialize for Layers {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

fn parse_layers(s: &str) -> Result<Layers, String> {
    s.parse()
}

#[derive(Debug, Parser)]
#[command(
    name = "fashionrn",
    version,
    about = "Relational-network outfit compatibility engine"
)]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// TOML file of flag values; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic outfit dataset with style-clustered items.
    GenSynthetic(GenSyntheticArgs),
    /// Build a description vocabulary from a manifest.
    BuildVocab(BuildVocabArgs),
    /// Train a scorer; a vocabulary enables the visual-semantic variant.
    Train(TrainArgs),
    /// Compatibility AUC of a checkpoint on a labeled manifest.
    EvalCompat(EvalCompatArgs),
    /// Fill-in-the-blank accuracy of a checkpoint.
    EvalFitb(EvalFitbArgs),
    /// Print the compatibility score of every outfit in a manifest.
    Score(ScoreArgs),
    /// Export item compatibility embeddings and a 2-D PCA projection.
    Embed(EmbedArgs),
    /// Finite-difference check of every parameter gradient.
    GradCheck(GradCheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenSynthetic(_) => "gen-synthetic",
            Command::BuildVocab(_) => "build-vocab",
            Command::Train(_) => "train",
            Command::EvalCompat(_) => "eval-compat",
            Command::EvalFitb(_) => "eval-fitb",
            Command::Score(_) => "score",
            Command::Embed(_) => "embed",
            Command::GradCheck(_) => "grad-check",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenSyntheticArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of styles (K).
    #[arg(long, default_value_t = 8)]
    pub styles: usize,
    /// Feature dimension (D).
    #[arg(long, default_value_t = 32)]
    pub feature_dim: usize,
    /// Number of categories (C).
    #[arg(long, default_value_t = 6)]
    pub categories: usize,
    /// Per-item noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
    #[arg(long, default_value_t = 8)]
    pub max_size: usize,
    /// Positive outfits in the training split.
    #[arg(long, default_value_t = 5000)]
    pub train_outfits: usize,
    #[arg(long, default_value_t = 1000)]
    pub valid_outfits: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_outfits: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildVocabArgs {
    /// Manifest whose item descriptions are counted.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::data::DEFAULT_VOCAB_SIZE)]
    pub max_size: usize,
    #[arg(long, default_value_t = crate::data::DEFAULT_MIN_COUNT)]
    pub min_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1000)]
    pub projection_dim: usize,
    /// Widths of the pair-relation MLP.
    #[arg(long, default_value = "512,512,256,256", value_parser = parse_layers)]
    pub g_layers: Layers,
    /// Widths of the aggregate MLP before the classifier.
    #[arg(long, default_value = "128,128,32", value_parser = parse_layers)]
    pub f_layers: Layers,
    #[arg(long, default_value_t = 0.35)]
    pub dropout: f64,
    /// Width of the description projection (visual-semantic only).
    #[arg(long, default_value_t = 300)]
    pub text_projection_dim: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_adam: f64,
    #[arg(long, default_value_t = 30)]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Training manifest.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation manifest.
    #[arg(long)]
    pub valid: PathBuf,
    /// Description vocabulary; enables the visual-semantic model.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    /// Add one sampled negative per positive to each split.
    #[arg(long, action = ArgAction::SetTrue)]
    pub sample_negatives: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalCompatArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Add one sampled negative per positive before scoring.
    #[arg(long, action = ArgAction::SetTrue)]
    pub sample_negatives: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("fitb_source").required(true).args(["queries", "manifest"])))]
pub struct EvalFitbArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Prebuilt queries.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<PathBuf>,
    /// Build queries from this manifest's positive outfits.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write the scores here.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Restrict to the items of this manifest.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// `item_id<TAB>style` table; adds intra/inter-style distances to the report.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub styles: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Items in the checked outfit.
    #[arg(long, default_value_t = 3)]
    pub items: usize,
    /// Check the visual-semantic variant.
    #[arg(long, action = ArgAction::SetTrue)]
    pub vse: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Long flag names accepted by `subcommand`.
fn known_flags(subcommand: &str) -> Vec<String> {
    Cli::command()
        .find_subcommand(subcommand)
        .map(|c| {
            c.get_arguments()
                .filter_map(|a| a.get_long().map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

fn toml_flag_value(key: &str, value: &toml::Value) -> Result<String, CliError> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Array(items) => Ok(items
            .iter()
            .map(|v| match v {
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::String(s) => Ok(s.clone()),
                other => Err(CliError::Invalid(format!(
                    "config key {key}: unsupported list element {other}"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?
            .join(",")),
        other => Err(CliError::Invalid(format!(
            "config key {key}: unsupported value {other}"
        ))),
    }
}

/// Flags contributed by `--config` for `subcommand`, in file order.
fn config_flags(path: &Path, subcommand: &str) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let known = known_flags(subcommand);
    let mut flags = Vec::new();
    let mut push = |key: &str, value: &toml::Value, strict: bool| -> Result<(), CliError> {
        let flag = key.replace('_', "-");
        if flag == "config" || !known.contains(&flag) {
            return if strict {
                Err(CliError::Invalid(format!("config [{subcommand}]: unknown key {key}")))
            } else {
                Ok(())
            };
        }
        match value {
            toml::Value::Boolean(true) => flags.push(OsString::from(format!("--{flag}"))),
            toml::Value::Boolean(false) => {}
            _ => {
                flags.push(OsString::from(format!("--{flag}")));
                flags.push(OsString::from(toml_flag_value(key, value)?));
            }
        }
        Ok(())
    };
    for (key, value) in &table {
        if !value.is_table() {
            push(key, value, false)?;
        }
    }
    if let Some(toml::Value::Table(section)) = table.get(subcommand) {
        for (key, value) in section {
            push(key, value, true)?;
        }
    }
    Ok(flags)
}

/// Inserts `--config` values right after the subcommand name so that later,
/// explicit flags override them.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut config = None;
    let mut subcommand = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy();
        if arg == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if subcommand.is_none() && !arg.starts_with('-') {
            subcommand = Some((i, arg.into_owned()));
        }
        i += 1;
    }
    let (Some(config), Some((at, name))) = (config, subcommand) else {
        return Ok(argv);
    };
    let flags = config_flags(&config, &name)?;
    let mut out = argv;
    out.splice(at + 1..at + 1, flags);
    Ok(out)
}

/// Parses `argv` (program name first) and runs the command, writing metrics
/// and results to `stdout`.
pub fn run(argv: Vec<OsString>, stdout: &mut dyn Write) -> Result<(), RunOutcome> {
    let argv = expand_config(argv).map_err(RunOutcome::Failed)?;
    let cli = Cli::try_parse_from(argv).map_err(RunOutcome::Clap)?;
    commands::execute(cli.command, stdout).map_err(RunOutcome::Failed)
}

#[derive(Debug)]
pub enum RunOutcome {
    /// Usage errors, `--help` and `--version`.
    Clap(clap::Error),
    Failed(CliError),
}

/// Runs a command line and returns the process exit code. Errors and usage
/// text go to stderr.
pub fn dispatch<I, S>(argv: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    match run(argv.into_iter().map(Into::into).collect(), stdout) {
        Ok(()) => EXIT_OK,
        Err(RunOutcome::Clap(e)) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                eprint!("{}", e.render().ansi());
            } else {
                // help and version belong on stdout
                let _ = write!(stdout, "{}", e.render());
            }
            code
        }
        Err(RunOutcome::Failed(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
