use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "ppress",
    version,
    about = "Lossless text compression driven by next-token predictors",
    after_help = "Exit status: 0 success, 2 usage, 3 I/O, 4 remote predictor unavailable, \
                  5 digest mismatch or corrupt container, 6 external tool failure."
)]
pub struct Cli {
    /// More output; repeat for more detail.
    #[arg(short, long, global = true, action = ArgAction::Count, conflicts_with = "quiet")]
    pub verbose: u8,

    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    /// TOML file whose settings take precedence over command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a file into a container.
    Compress(CompressArgs),
    /// Restore the original bytes from a container.
    Decompress(DecompressArgs),
    /// Print n-gram, entropy and mutual-information statistics.
    Analyze(AnalyzeArgs),
    /// Run an experiment spec and write its report directory.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Default, Args)]
#[group(id = "predictor_choice", multiple = false)]
pub struct PredictorArgs {
    /// Predictor: uniform, orderk:K, or remote:[ENDPOINT,]MODEL.
    #[arg(short, long, value_name = "SPEC")]
    pub predictor: Option<String>,

    /// Shorthand for --predictor uniform.
    #[arg(long)]
    pub uniform: bool,

    /// Shorthand for --predictor orderk:K.
    #[arg(long, value_name = "K")]
    pub order: Option<usize>,

    /// Shorthand for --predictor remote:[ENDPOINT,]MODEL.
    #[arg(long, value_name = "[ENDPOINT,]MODEL")]
    pub remote: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RemoteArgs {
    /// Logit server address (host:port). Falls back to $PPRESS_ENDPOINT.
    #[arg(long, value_name = "ADDR")]
    pub endpoint: Option<String>,

    /// Seconds to wait for the logit server before giving up.
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[command(flatten)]
    pub predictor: PredictorArgs,

    /// Symbols per chunk; 0 codes the whole input as one chunk.
    #[arg(short, long, value_name = "N")]
    pub chunk: Option<usize>,

    #[command(flatten)]
    pub remote: RemoteArgs,

    /// Replace the output file if it exists.
    #[arg(short, long)]
    pub force: bool,

    /// File to compress.
    pub input: PathBuf,

    /// Container to write; defaults to INPUT.pp.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    /// Ignored: the container header names its predictor. A differing value
    /// only produces a warning.
    #[command(flatten)]
    pub predictor: PredictorArgs,

    #[command(flatten)]
    pub remote: RemoteArgs,

    /// Replace the output file if it exists.
    #[arg(short, long)]
    pub force: bool,

    /// Container to read.
    pub input: PathBuf,

    /// File to write; defaults to INPUT without its .pp suffix, or INPUT.out.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// N-gram orders to profile, as N or A..B within 1..4.
    #[arg(long, value_name = "RANGE")]
    pub ngram: Option<String>,

    /// Comma-separated granularities: char, subword, word.
    #[arg(long, value_name = "LIST")]
    pub entropy: Option<String>,

    /// Mutual information between adjacent words.
    #[arg(long)]
    pub mi: bool,

    /// Emit JSON lines instead of text.
    #[arg(long)]
    pub json: bool,

    /// Files, or directories whose files are analyzed.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Report directory; overrides output_dir in the experiment file.
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,

    /// Worker threads; overrides workers in the experiment file.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,

    /// Skip the ablation grids listed in the experiment file.
    #[arg(long)]
    pub no_ablations: bool,

    #[command(flatten)]
    pub remote: RemoteArgs,

    /// Experiment spec (TOML).
    pub spec: PathBuf,
}
