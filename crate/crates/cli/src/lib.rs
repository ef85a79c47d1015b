//! Command-line front end. Batch work (ingest, simulate, compare, synth) runs
//! in-process; `serve` hosts the run service and `runs` talks to one.

pub mod cmd;
pub mod fsutil;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use triage_core::corpus::DatasetFormat;
use triage_core::engine::{BackendConfig, RunConfig, StartMode};
use triage_core::evalstats::CompareMetric;
use triage_core::sampling::Strategy;
use triage_core::textmetrics::TermLists;

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "Effort-aware active learning for bug report triage")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn log_level(&self) -> &'static str {
        match self.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a JSONL or CSV issue export into a corpus file.
    Ingest(IngestArgs),
    /// Run a whole experiment with oracle labels and write its trace.
    Simulate(SimulateArgs),
    /// Compare traces with Scott-Knott ranking or a Wilcoxon test.
    Compare(CompareArgs),
    /// Host the run service.
    Serve(ServeArgs),
    /// Generate a synthetic labeled dataset (JSONL).
    Synth(SynthArgs),
    /// Talk to a running service.
    Runs(RunsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => DatasetFormat::Jsonl,
            FormatArg::Csv => DatasetFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, env = "TRIAGE_INPUT")]
    pub input: PathBuf,
    #[arg(long, value_enum, env = "TRIAGE_FORMAT")]
    pub format: FormatArg,
    #[arg(long, env = "TRIAGE_OUT")]
    pub out: PathBuf,
    /// Overwrite an existing output file.
    #[arg(long, env = "TRIAGE_FORCE")]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    EffortAware,
    Uncertainty,
    Random,
    Confidence,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::EffortAware => Strategy::EffortAware,
            StrategyArg::Uncertainty => Strategy::Uncertainty,
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Confidence => Strategy::Confidence,
        }
    }
}

/// Run configuration flags shared by `simulate` and `runs create`.
#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    #[arg(long, value_enum, env = "TRIAGE_STRATEGY")]
    pub strategy: StrategyArg,
    /// Reports queried per timestep.
    #[arg(long, env = "TRIAGE_K")]
    pub k: usize,
    #[arg(long, default_value_t = 10, env = "TRIAGE_TIMESTEPS")]
    pub timesteps: usize,
    /// Pseudo labels per human label.
    #[arg(long, default_value_t = 1, env = "TRIAGE_PSEUDO_S")]
    pub pseudo_s: usize,
    #[arg(long, default_value_t = 0, env = "TRIAGE_SEED")]
    pub seed: u64,
    /// `builtin`, or the base URL of a model server.
    #[arg(long, default_value = "builtin", env = "TRIAGE_BACKEND")]
    pub backend: String,
    /// Embedding dimension declared for a remote backend.
    #[arg(long, default_value_t = 768, env = "TRIAGE_BACKEND_DIM")]
    pub backend_dim: usize,
    #[arg(long, default_value_t = 0, env = "TRIAGE_TEST_SIZE")]
    pub test_size: usize,
    /// Size of the initial labeled set for a cold start (defaults to k).
    #[arg(long, env = "TRIAGE_INITIAL_LABELS")]
    pub initial_labels: Option<usize>,
    /// Start from a pre-trained model instead of a cold initial set.
    #[arg(long, env = "TRIAGE_WARM")]
    pub warm: bool,
    /// Fraction of each update kept for training in the logged validation split.
    #[arg(long, default_value_t = 0.8, env = "TRIAGE_TRAIN_VAL_SPLIT")]
    pub train_val_split: f64,
    /// Replacement relevant-term list, one term per line.
    #[arg(long, env = "TRIAGE_RELEVANT_TERMS")]
    pub relevant_terms: Option<PathBuf>,
    /// Replacement irrelevant-term list, one term per line.
    #[arg(long, env = "TRIAGE_IRRELEVANT_TERMS")]
    pub irrelevant_terms: Option<PathBuf>,
    /// Record wall-clock step durations (makes traces non-reproducible).
    #[arg(long, env = "TRIAGE_RECORD_TIMING")]
    pub record_timing: bool,
}

impl RunFlags {
    pub fn to_config(&self) -> Result<RunConfig> {
        let backend = if self.backend == "builtin" {
            BackendConfig::Builtin
        } else if self.backend.starts_with("http://") || self.backend.starts_with("https://") {
            BackendConfig::Remote {
                endpoint: self.backend.clone(),
                dim: self.backend_dim,
            }
        } else {
            anyhow::bail!("--backend must be `builtin` or an http(s) URL, got `{}`", self.backend);
        };
        let start = if self.warm {
            StartMode::Warm
        } else {
            StartMode::Cold {
                initial_labels: self.initial_labels,
            }
        };
        let term_lists = TermLists::with_overrides(
            self.relevant_terms.as_deref(),
            self.irrelevant_terms.as_deref(),
        )?;
        let config = RunConfig {
            timesteps: self.timesteps,
            pseudo_s: self.pseudo_s,
            backend,
            start,
            test_size: self.test_size,
            train_val_split: self.train_val_split,
            record_timing: self.record_timing,
            term_lists,
            ..RunConfig::new(self.k, self.strategy.into(), self.seed)
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Corpus file written by `ingest`.
    #[arg(long, env = "TRIAGE_CORPUS")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
    /// Trace CSV to write.
    #[arg(long, env = "TRIAGE_OUT")]
    pub out: PathBuf,
    /// Save the run state here after every timestep and resume from it if it
    /// already exists.
    #[arg(long, env = "TRIAGE_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    F1,
    Precision,
    Recall,
    Accuracy,
    Readability,
    Identifiability,
}

impl From<MetricArg> for CompareMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::F1 => CompareMetric::F1,
            MetricArg::Precision => CompareMetric::Precision,
            MetricArg::Recall => CompareMetric::Recall,
            MetricArg::Accuracy => CompareMetric::Accuracy,
            MetricArg::Readability => CompareMetric::Readability,
            MetricArg::Identifiability => CompareMetric::Identifiability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    ScottKnott,
    Wilcoxon,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, num_args = 1.., required = true, value_delimiter = ',', env = "TRIAGE_TRACES")]
    pub traces: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "f1", env = "TRIAGE_METRIC")]
    pub metric: MetricArg,
    #[arg(long, value_enum, env = "TRIAGE_TEST")]
    pub test: TestArg,
    /// Also write the report as CSV.
    #[arg(long, env = "TRIAGE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Corpus files to host; each is addressed by its file stem.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',', env = "TRIAGE_CORPUS")]
    pub corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080, env = "TRIAGE_PORT")]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1", env = "TRIAGE_HOST")]
    pub host: String,
    #[arg(long, env = "TRIAGE_STATE_DIR")]
    pub state_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000, env = "TRIAGE_REPORTS")]
    pub reports: usize,
    #[arg(long, default_value_t = 0, env = "TRIAGE_SEED")]
    pub seed: u64,
    /// Probability of flipping each planted label.
    #[arg(long, default_value_t = 0.02, env = "TRIAGE_LABEL_NOISE")]
    pub label_noise: f64,
    /// JSONL file to write.
    #[arg(long, env = "TRIAGE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "TRIAGE_FORCE")]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RunsArgs {
    /// Base URL of the run service.
    #[arg(long, global = true, default_value = "http://127.0.0.1:8080", env = "TRIAGE_SERVER")]
    pub server: String,
    #[command(subcommand)]
    pub command: RunsCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Bug,
    Nonbug,
}

impl From<LabelArg> for triage_core::corpus::Label {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Bug => triage_core::corpus::Label::Bug,
            LabelArg::Nonbug => triage_core::corpus::Label::Nonbug,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum RunsCommand {
    /// Create a run on a corpus hosted by the service.
    Create {
        /// Corpus name (file stem of a served corpus).
        #[arg(long, env = "TRIAGE_CORPUS_NAME")]
        corpus: String,
        #[command(flatten)]
        run: RunFlags,
    },
    /// List runs.
    List,
    /// Show a run's summary.
    Status { run_id: String },
    /// Show the reports waiting for labels.
    Queue {
        run_id: String,
        /// Print the raw JSON response.
        #[arg(long)]
        json: bool,
    },
    /// Submit one label.
    Label {
        run_id: String,
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        label: LabelArg,
        /// 0 (most readable) to 4.
        #[arg(long)]
        readability: Option<u8>,
        /// 0 (most identifiable) to 4.
        #[arg(long)]
        identifiability: Option<u8>,
        #[arg(long)]
        elapsed_ms: Option<u64>,
        #[arg(long, default_value = "", env = "TRIAGE_LABELER")]
        labeler: String,
    },
    /// Override an earlier label.
    Correct {
        run_id: String,
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        label: LabelArg,
        #[arg(long, default_value = "", env = "TRIAGE_LABELER")]
        labeler: String,
    },
    /// Start the next timestep.
    Advance {
        run_id: String,
        /// Block until the job finishes.
        #[arg(long)]
        wait: bool,
        /// Give up waiting after this many seconds.
        #[arg(long, default_value_t = 3600)]
        timeout_secs: u64,
    },
    /// Fetch the trace (JSON, or CSV with --csv).
    Trace {
        run_id: String,
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fetch the annotation log as CSV.
    Annotations {
        run_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd::ingest::run(&a),
        Command::Simulate(a) => cmd::simulate::run(&a),
        Command::Compare(a) => cmd::compare::run(&a),
        Command::Synth(a) => cmd::synth::run(&a),
        Command::Serve(a) => runtime()?.block_on(cmd::serve::run(&a)),
        Command::Runs(a) => runtime()?.block_on(cmd::runs::run(&a)),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}
