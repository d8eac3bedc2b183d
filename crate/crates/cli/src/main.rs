//! `conceptprobe`: train, name, extract, verify, and report.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric, 5 judge transport.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conceptprobe_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "conceptprobe",
    version,
    about = "Sparse-autoencoder concept discovery and report-based verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-dictionary corpus with known ground truth.
    Synth(SynthArgs),
    /// Train a sparse autoencoder on image embeddings.
    Train(TrainArgs),
    /// Name every latent unit after its most similar dictionary term.
    Name(NameArgs),
    /// Build per-image predicted concept sets.
    Extract(ExtractArgs),
    /// Judge predicted concepts against paired reports and score images.
    Verify(VerifyArgs),
    /// Summarize one or more score files.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 32)]
    n_terms: usize,
    #[arg(long, default_value_t = 2000)]
    n_images: usize,
    #[arg(long, default_value_t = 3)]
    active: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KPreset {
    /// k = number of dictionary terms
    DictSize,
    /// k = 2 × embedding dim
    #[value(name = "expansion-2")]
    Expansion2,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Latent width. Without `--k` or `--k-preset`, k is the size of `--dict`.
    #[arg(long, conflicts_with = "k_preset")]
    k: Option<usize>,
    #[arg(long, value_enum)]
    k_preset: Option<KPreset>,
    /// Terms JSONL, used to size k by dictionary cardinality.
    #[arg(long, alias = "terms")]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = conceptprobe_core::sae::DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = conceptprobe_core::sae::DEFAULT_LAMBDA1)]
    lambda1: f64,
    #[arg(long, default_value_t = conceptprobe_core::sae::DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = conceptprobe_core::sae::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Permit k smaller than the embedding dim.
    #[arg(long)]
    allow_undercomplete: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch log; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct NameArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    terms: PathBuf,
    #[arg(long)]
    term_embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long)]
    terms: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long)]
    top_k: Option<usize>,
    /// Keep every unit even when several share a label.
    #[arg(long)]
    no_dedupe: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeArg {
    Mock,
    Http,
}

#[derive(Args)]
struct VerifyArgs {
    /// Concept-set JSONL written by `extract`.
    #[arg(long)]
    concepts: PathBuf,
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    terms: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    judge: JudgeArg,
    #[arg(long, env = "CONCEPTPROBE_JUDGE_URL")]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    /// Prompt template file with {concept} and {report} placeholders.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Dropped-image report; defaults to `<out>.dropped.jsonl`.
    #[arg(long)]
    dropped: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "scores", required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Transport => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Error> = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Name(a) => commands::name(a),
        Command::Extract(a) => commands::extract(a),
        Command::Verify(a) => commands::verify(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
