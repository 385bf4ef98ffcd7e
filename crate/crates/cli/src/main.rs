mod commands;
mod config;
mod error;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use emoadapt_core::corpus::Partition;

use crate::config::{parse_seeds, RunConfigFile};
use crate::error::CliError;

/// Residual-adapter speech emotion recognition: features, training,
/// evaluation and significance testing.
#[derive(Debug, Parser)]
#[command(name = "emoadapt", version)]
struct Cli {
    /// TOML run configuration (see `dump-config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute log-mel features for every sample of the given manifests.
    Features(FeaturesArgs),
    /// Train models and append test scores.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Evaluate a checkpoint on one partition of a corpus.
    Eval(EvalArgs),
    /// Almost Stochastic Order test between two models.
    Aso(AsoArgs),
    /// Mean ASO epsilon between every pair of models, as CSV.
    Dominance(DominanceArgs),
    /// Generate synthetic tone corpora.
    Synth(SynthArgs),
    /// Print the effective configuration as TOML.
    DumpConfig,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recompute entries that are already cached.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
pub struct CommonTrain {
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Seeds to run: `N`, `A..B` (inclusive) or `A,B,C`.
    #[arg(long, default_value = "0", value_parser = parse_seed_list)]
    pub seeds: SeedList,
    /// Name under which scores and checkpoints are stored.
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Use the 8-filter desk-scale architecture.
    #[arg(long)]
    pub tiny: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps_per_stage: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Print one line per epoch or evaluation round.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum TrainCommand {
    /// Train each corpus from scratch.
    Scratch(CommonTrain),
    /// Train only the classifier head on a frozen pre-trained backbone.
    Head {
        #[command(flatten)]
        common: CommonTrain,
        /// Checkpoint to start from; `{seed}` is replaced by the seed.
        #[arg(long)]
        from: String,
        /// Domain whose adapters and batch norms a new corpus inherits
        /// (defaults to the checkpoint's first domain).
        #[arg(long)]
        source_domain: Option<String>,
    },
    /// Tune adapters and head on a frozen shared backbone.
    Adapters {
        #[command(flatten)]
        common: CommonTrain,
        /// Checkpoint to start from; `{seed}` is replaced by the seed.
        #[arg(long)]
        from: String,
        /// Reinitialise the corpus's adapters and head even if the
        /// checkpoint already has that domain.
        #[arg(long)]
        reinit: bool,
    },
    /// Train all corpora jointly, one batch per corpus per round.
    Multidomain(CommonTrain),
    /// Pool corpora into arousal (A), valence (V) or both (AV) tasks.
    AggregateAv {
        #[arg(value_enum)]
        target: AvArg,
        #[command(flatten)]
        common: CommonTrain,
        /// CSV `label,canonical_table_av_label` for labels outside the table.
        #[arg(long)]
        aliases: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AvArg {
    #[value(name = "A")]
    A,
    #[value(name = "V")]
    V,
    #[value(name = "AV")]
    Av,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_partition, default_value = "test")]
    partition: Partition,
    /// Model domain to evaluate (defaults to the corpus id).
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Append the result to this score file (test partition only).
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value = "eval")]
    model_id: String,
    /// Seed written to the score record.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct AsoArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    model_a: String,
    #[arg(long)]
    model_b: String,
    /// Restrict to one corpus (default: every corpus both models share).
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bonferroni divisor for alpha.
    #[arg(long, default_value_t = 1)]
    adjust_n: usize,
}

#[derive(Debug, Args)]
struct DominanceArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1)]
    adjust_n: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    corpora: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    speakers: usize,
    /// Corpus ids are `<prefix>00`, `<prefix>01`, ...
    #[arg(long, default_value = "syn")]
    prefix: String,
}

#[derive(Clone, Debug)]
pub struct SeedList(pub Vec<u64>);

fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList)
}

fn parse_partition(s: &str) -> Result<Partition, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Features(a) => commands::features(&cfg, &a.manifests, a.cache.as_deref(), a.seed, a.force),
        Command::Train(t) => train::run(&cfg, t),
        Command::Eval(a) => commands::eval(
            &cfg,
            commands::EvalRequest {
                checkpoint: &a.checkpoint,
                manifest: &a.manifest,
                partition: a.partition,
                domain: a.domain.as_deref(),
                cache: a.cache.as_deref(),
                scores: a.scores.as_deref(),
                model_id: &a.model_id,
                seed: a.seed,
            },
        ),
        Command::Aso(a) => commands::aso(&cfg, &a.scores, &a.model_a, &a.model_b, a.corpus.as_deref(), a.alpha, a.adjust_n),
        Command::Dominance(a) => commands::dominance(&cfg, &a.scores, a.alpha, a.adjust_n, a.out.as_deref()),
        Command::Synth(a) => commands::synth(&a.out, a.corpora, a.classes, a.samples_per_class, a.seed, a.noise, a.speakers, &a.prefix),
        Command::DumpConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
