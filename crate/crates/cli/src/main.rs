mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use csr_core::dataio::Dataset;
use csr_core::model::RunConfig;

/// Exit status for a failed verification (split statistics, gradient check).
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// Bad flag values or combinations detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "csrqa",
    version,
    about = "Character-level siamese CNN for answer selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect the character alphabet.
    Alphabet {
        #[command(subcommand)]
        action: AlphabetAction,
    },
    /// Convert raw splits to canonical TSV and check their statistics.
    Prepare(PrepareArgs),
    /// Train one model and write a checkpoint.
    Train(TrainArgs),
    /// Score a split with a checkpoint and write a TREC run file.
    Eval(EvalArgs),
    /// Compare analytic and numeric gradients on a tiny network.
    Gradcheck(GradcheckArgs),
    /// Train and test over consecutive seeds and summarize.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand, Debug)]
enum AlphabetAction {
    /// One symbol per line, in index order.
    Dump,
    /// SHA-256 of the dump.
    Hash,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetArg {
    Trecqa,
    Wikiqa,
    Canonical,
}

impl DatasetArg {
    pub fn dataset(self) -> Option<Dataset> {
        match self {
            DatasetArg::Trecqa => Some(Dataset::TrecQa),
            DatasetArg::Wikiqa => Some(Dataset::WikiQa),
            DatasetArg::Canonical => None,
        }
    }
}

/// One flag per configuration field. Values use the same syntax as the
/// `key = value` config file.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigFlags {
    /// Key-value configuration file, applied before the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub embed_dim: Option<String>,
    /// Convolution stack as `width:filters,...`, e.g. `3:128,5:32`.
    #[arg(long)]
    pub conv_blocks: Option<String>,
    /// `narrow` or `wide`.
    #[arg(long)]
    pub conv_mode: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    /// `relu` or `tanh`.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub dropout_rate: Option<String>,
    #[arg(long)]
    pub use_bn: Option<String>,
    #[arg(long)]
    pub bn_momentum: Option<String>,
    #[arg(long)]
    pub bn_eps: Option<String>,
    #[arg(long)]
    pub bn_exact_stats: Option<String>,
    #[arg(long)]
    pub max_len_q: Option<String>,
    #[arg(long)]
    pub max_len_a: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub adadelta_rho: Option<String>,
    #[arg(long)]
    pub adadelta_eps: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub init_scale: Option<String>,
}

impl ConfigFlags {
    fn overrides(&self) -> [(&'static str, &Option<String>); 20] {
        [
            ("embed_dim", &self.embed_dim),
            ("conv_blocks", &self.conv_blocks),
            ("conv_mode", &self.conv_mode),
            ("hidden_dim", &self.hidden_dim),
            ("activation", &self.activation),
            ("dropout_rate", &self.dropout_rate),
            ("use_bn", &self.use_bn),
            ("bn_momentum", &self.bn_momentum),
            ("bn_eps", &self.bn_eps),
            ("bn_exact_stats", &self.bn_exact_stats),
            ("max_len_q", &self.max_len_q),
            ("max_len_a", &self.max_len_a),
            ("lambda", &self.lambda),
            ("adadelta_rho", &self.adadelta_rho),
            ("adadelta_eps", &self.adadelta_eps),
            ("batch_size", &self.batch_size),
            ("patience", &self.patience),
            ("max_epochs", &self.max_epochs),
            ("seed", &self.seed),
            ("init_scale", &self.init_scale),
        ]
    }

    /// `base`, then the config file, then individual flags.
    pub fn resolve(&self, base: RunConfig) -> anyhow::Result<RunConfig> {
        let mut c = base;
        if let Some(path) = &self.config {
            c.apply_kv_file(path)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Output directory for canonical TSVs and qrels.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip comparison with the published split statistics.
    #[arg(long)]
    pub no_verify: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "canonical")]
    pub dataset: DatasetArg,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Also score this split with the kept model.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to score.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run tag written in the last column of the run file.
    #[arg(long, default_value = "csr")]
    pub tag: String,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
    /// Flags here apply on top of the tiny configuration.
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "canonical")]
    pub dataset: DatasetArg,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Number of seeds; runs use `seed .. seed + seeds - 1`.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigFlags,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 3;
    }
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if let Some(e) = err.downcast_ref::<csr_core::Error>() {
        return if matches!(e, csr_core::Error::Config(_)) {
            1
        } else {
            2
        };
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Alphabet { action } => commands::alphabet(matches!(action, AlphabetAction::Hash)),
        Command::Prepare(args) => commands::prepare(&args),
        Command::Train(args) => commands::train(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Gradcheck(args) => commands::gradcheck(&args),
        Command::Experiment(args) => commands::experiment(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
