//! `simulst`: run simultaneous-translation policies over recorded or
//! synthetic traces and score them.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simulst_core::{HeadSpec, PolicyConfig, PolicyKind};

#[derive(Parser)]
#[command(name = "simulst", version, about = "Simultaneous translation policy simulator and latency scorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy over a trace file; write the delay log and the report.
    Simulate(SimulateArgs),
    /// Run a grid of policy configurations; write one TSV row per point.
    Sweep(SweepArgs),
    /// Score an existing delay log against references.
    Metrics(MetricsArgs),
    /// Generate synthetic traces.
    Synth(SynthArgs),
    /// Check a trace file against the schema and its invariants.
    Validate(ValidateArgs),
    /// Export attention matrices (raw and filtered) and diagonality tables.
    DumpAttention(DumpArgs),
}

#[derive(Args, Clone)]
pub struct PolicyArgs {
    /// edatt, la (local agreement) or waitk
    #[arg(long, default_value = "edatt")]
    pub policy: PolicyKind,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2)]
    pub lambda: u32,
    #[arg(long, default_value_t = 4)]
    pub layer: u32,
    /// Head index (1-based) or "averaged"
    #[arg(long, default_value = "averaged")]
    pub head: HeadSpec,
    #[arg(long, default_value_t = 3)]
    pub k: u32,
    #[arg(long, default_value_t = 800.0)]
    pub segment_ms: f64,
    /// Keep the last encoder frame when thresholding attention
    #[arg(long)]
    pub no_filter: bool,
}

impl PolicyArgs {
    pub fn config(&self) -> PolicyConfig {
        PolicyConfig {
            policy_kind: self.policy,
            alpha: self.alpha,
            lambda: self.lambda,
            layer: self.layer,
            head: self.head,
            k: self.k,
            segment_ms: self.segment_ms,
            filter_last_frame: !self.no_filter,
        }
    }
}

#[derive(Args, Clone)]
pub struct CostArgs {
    /// Fixed cost of one model query, ms
    #[arg(long, default_value_t = 0.0)]
    pub cost_a: f64,
    /// Query cost per ms of audio prefix
    #[arg(long, default_value_t = 0.0)]
    pub cost_b: f64,
    /// Cost of one policy evaluation, ms
    #[arg(long, default_value_t = 0.0)]
    pub cost_policy_ms: f64,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Trace file (JSON lines)
    pub trace: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory for delays.jsonl, events.jsonl, report.json, report.tsv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    pub trace: PathBuf,
    /// Comma-separated policies
    #[arg(long, value_delimiter = ',', default_value = "edatt")]
    pub policies: Vec<PolicyKind>,
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.4,0.2,0.1,0.05,0.03")]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub lambdas: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub layers: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "averaged")]
    pub heads: Vec<HeadSpec>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
    pub ks: Vec<u32>,
    #[arg(long, default_value_t = 800.0)]
    pub segment_ms: f64,
    #[arg(long)]
    pub no_filter: bool,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output TSV file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetricsArgs {
    /// Delay log (JSON lines)
    pub delays: PathBuf,
    /// References, one sentence per line, in delay-log order
    pub references: PathBuf,
    /// Output directory for report.json and report.tsv; JSON on stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// JSON file with synthetic spec fields; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub n_tokens: Option<usize>,
    #[arg(long)]
    pub frames_per_segment: Option<usize>,
    #[arg(long)]
    pub slope: Option<f64>,
    /// Mass on the final frame of every row
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub segment_ms: Option<f64>,
    #[arg(long)]
    pub duration_ms: Option<f64>,
    #[arg(long)]
    pub source_words: Option<u32>,
    #[arg(long)]
    pub layer: Option<u32>,
    /// 1 stores one averaged matrix, more stores a per-head stack
    #[arg(long)]
    pub heads: Option<u32>,
    /// Number of utterances; seeds and ids count up from the first
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output trace file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ValidateArgs {
    pub trace: PathBuf,
}

#[derive(Args)]
pub struct DumpArgs {
    pub trace: PathBuf,
    /// Only this utterance
    #[arg(long)]
    pub id: Option<String>,
    /// Only this step (0-based)
    #[arg(long)]
    pub step: Option<usize>,
    /// Half-width of the diagonal band, in frames
    #[arg(long, default_value_t = 1)]
    pub band: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Synth(a) => commands::synth(a),
        Command::Validate(a) => commands::validate(a),
        Command::DumpAttention(a) => commands::dump_attention(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
