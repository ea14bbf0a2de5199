//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use insight_core::eval::Method;

#[derive(Debug, Parser)]
#[command(name = "insight", version, about = "Synthetic wearable cohorts, health-question benchmarks and a tool-using agent")]
pub struct Cli {
    /// Seed for every random choice (cohort, benchmark, few-shot clustering, bootstrap).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output location: a directory for `synth` and `bench run`, a file otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort into the `--out` directory.
    Synth(SynthArgs),
    /// Generate or evaluate benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Ask the agent one question about one user and print the trace.
    Ask(AskArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of users.
    #[arg(long)]
    pub users: Option<usize>,
    /// Days per user (1 to 31).
    #[arg(long)]
    pub days: Option<u32>,
    /// Generator configuration JSON replacing the built-in defaults.
    #[arg(long, value_name = "PATH")]
    pub generator: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Generate an objective-query benchmark as JSONL (to `--out` or stdout).
    Gen(BenchGenArgs),
    /// Answer and score a benchmark with one or more methods.
    Run(BenchRunArgs),
    /// Run open-ended questions through the agent (unscored).
    OpenEnded(OpenEndedArgs),
}

#[derive(Debug, Args)]
pub struct BenchGenArgs {
    /// Cohort directory written by `synth`.
    #[arg(long, value_name = "DIR")]
    pub cohort: PathBuf,
    /// Number of queries.
    #[arg(long)]
    pub queries: Option<usize>,
    /// Restrict generation to this many seeded-sampled users.
    #[arg(long)]
    pub users: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchRunArgs {
    /// Methods to run, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub method: Vec<Method>,
    /// Benchmark JSONL file.
    #[arg(long, value_name = "FILE")]
    pub bench: PathBuf,
    /// Cohort directory holding the benchmark's users.
    #[arg(long, value_name = "DIR")]
    pub cohort: PathBuf,
    /// Model backend: gold, gold-recover, demo, remote, const:<text> or scripted:<path>.
    #[arg(long)]
    pub backend: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Only run the first N queries.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Bootstrap resamples for the accuracy interval.
    #[arg(long)]
    pub resamples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OpenEndedArgs {
    /// Open-ended queries JSONL; the bundled sample set when omitted.
    #[arg(long, value_name = "FILE")]
    pub queries: Option<PathBuf>,
    /// Cohort directory; users are assigned round-robin.
    #[arg(long, value_name = "DIR")]
    pub cohort: PathBuf,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// User id, e.g. user_0001.
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub question: String,
    #[arg(long)]
    pub backend: Option<String>,
    /// Cohort directory; a default cohort is synthesized from `--seed` when omitted.
    #[arg(long, value_name = "DIR")]
    pub cohort: Option<PathBuf>,
    /// Print the trace as JSON lines instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Cohort directory; a default cohort is synthesized from `--seed` when omitted.
    #[arg(long, value_name = "DIR")]
    pub cohort: Option<PathBuf>,
    /// Port to listen on; 0 picks a free one.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    /// Directory for persisted session logs.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Backend used when a request names none.
    #[arg(long)]
    pub backend: Option<String>,
    /// Allowed browser origin; any origin when omitted.
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// Make a scripted backend file addressable as NAME.
    #[arg(long = "script", value_name = "NAME=PATH")]
    pub scripts: Vec<String>,
}
