mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Entity-guided summarization: graphs, training, inference and analysis.
#[derive(Debug, Parser)]
#[command(name = "rhgnn-summ", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build sentence-entity graphs and the density report.
    BuildGraphs(GraphArgs),
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
    /// Split a corpus into density-thresholded sub-corpora.
    Partition(PartitionArgs),
    /// Supervised selector training.
    TrainSelector(TrainArgs),
    /// Supervised generator training from a selector checkpoint.
    TrainGenerator(TrainArgs),
    /// Self-critical selector fine-tuning from a generator checkpoint.
    TrainRl(TrainArgs),
    /// Extractive and abstractive summaries per document.
    Summarize(SummarizeArgs),
    /// ROUGE and precision@k report.
    Evaluate(EvaluateArgs),
    /// Planted-signal corpus and co-occurrence table.
    GenSynthetic(SyntheticArgs),
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub cooc: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Also write stats.json, density.json and density_histogram.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Threshold such as "<0.7" or ">=0.6"; repeatable.
    #[arg(long, required = true)]
    pub density: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by every command that builds or restores a model.
#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ablation name; repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub ablate: Vec<String>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub cooc: Option<PathBuf>,
    #[arg(long)]
    pub entity_emb: Option<PathBuf>,
    #[arg(long)]
    pub word_emb: Option<PathBuf>,
    /// Upstream checkpoint (required for the generator and RL phases).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub cooc: Option<PathBuf>,
    /// extractive, abstractive or both.
    #[arg(long, default_value = "both")]
    pub mode: String,
    /// train, dev, test or all.
    #[arg(long, default_value = "all")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub cooc: Option<PathBuf>,
    /// extractive or abstractive.
    #[arg(long, default_value = "extractive")]
    pub mode: String,
    /// train, dev, test or all.
    #[arg(long, default_value = "all")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 10)]
    pub sentences: usize,
    #[arg(long, default_value_t = 6)]
    pub entities: usize,
    #[arg(long, default_value_t = 4)]
    pub planted: usize,
    #[arg(long, default_value_t = 3)]
    pub salient: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RHGNN_SUMM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("RHGNN_SUMM_THREADS={v:?}: {e}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|_| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
