use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::CliError;

/// Protograph batched network codes: thresholds, optimization, lifting,
/// simulation and packet-level encode/decode.
#[derive(Debug, Parser)]
#[command(name = "pbnc", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Erasure-probability grid step.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub delta1: f64,
    /// Capacity bucket width (default: 0.01 * M).
    #[arg(long, global = true)]
    pub delta2: Option<f64>,
    /// Maximum DE iterations.
    #[arg(long, global = true, default_value_t = 1000)]
    pub lmax: usize,
    /// DE success threshold on the largest posterior erasure probability.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub ztarget: f64,
    #[arg(long, global = true, value_enum, default_value_t = Omega::Binomial)]
    pub omega: Omega,
    #[arg(long = "bcn-form", global = true, value_enum, default_value_t = Form::Beta)]
    pub bcn_form: Form,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Omega {
    Exact,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Form {
    Direct,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Decoder {
    Bp,
    Inactivation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decoding threshold of a design, per extension row when the design
    /// marks a core/extension split.
    Threshold(ThresholdArgs),
    /// Randomized core and extension search from a config file.
    Optimize(OptimizeArgs),
    /// Lift a design into a concrete code.
    Lift(LiftArgs),
    /// Monte-Carlo frame error rates from a plan file.
    Simulate(SimulateArgs),
    /// Lower bound on the ML frame error rate.
    Mlbound(MlboundArgs),
    /// Encode input packets and pass the batches through a line network.
    Encode(EncodeArgs),
    /// Decode received batches back to input packets.
    Decode(DecodeArgs),
    /// Rank-distribution families.
    #[command(subcommand)]
    Family(FamilyCommand),
    /// Print a bundled design preset.
    Preset {
        /// design_example_1 or design_example_2
        name: String,
    },
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Design file or bundled preset name.
    pub design: String,
    /// Precomputed family file instead of enumerating the line network.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Number of hops (default: from the design).
    #[arg(long)]
    pub hops: Option<usize>,
    /// Force the equal-erasure search.
    #[arg(long, conflicts_with = "heterogeneous")]
    pub homogeneous: bool,
    /// Force the full erasure grid.
    #[arg(long)]
    pub heterogeneous: bool,
    /// Only evaluate the core plus this many extension rows.
    #[arg(long)]
    pub rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    pub config: PathBuf,
    /// Write the optimized design here (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Structured run log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint written after every core round.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Resume the core search from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    /// Design file or bundled preset name.
    pub design: String,
    #[arg(long)]
    pub z1: Option<usize>,
    #[arg(long)]
    pub z2: Option<usize>,
    /// Attempts at a BP-decodable core puncturing.
    #[arg(long, default_value_t = 100)]
    pub retry_cap: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub plan: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Per-trial log (one JSON object per line).
    #[arg(long)]
    pub trial_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MlboundArgs {
    #[arg(long = "batch-size", short = 'M')]
    pub m_batch: usize,
    /// Field exponent: q = 2^m.
    #[arg(long, default_value_t = 8)]
    pub m: u32,
    /// Per-hop erasure probabilities.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    /// Number of input packets.
    #[arg(long, short = 'A')]
    pub a: usize,
    /// Batch counts: integers or lo:hi[:step] ranges.
    #[arg(long, short = 'N', value_delimiter = ',', required = true)]
    pub n: Vec<String>,
    /// Also estimate Pr{sum of ranks < A} by sampling transfer matrices.
    #[arg(long)]
    pub mc_trials: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Lifted code file.
    #[arg(long)]
    pub code: PathBuf,
    /// Input packet file with A packets.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Received-batches file.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Per-hop erasure probabilities (default: lossless).
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Number of batches to send (default: all).
    #[arg(long)]
    pub batches: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub code: PathBuf,
    /// Received-batches file.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Decoded packet file.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Decoder::Inactivation)]
    pub decoder: Decoder,
    /// Inactivation cap (default: unlimited).
    #[arg(long)]
    pub max_inactive: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum FamilyCommand {
    /// Enumerate a line-network family and write it as text.
    Export {
        #[arg(long = "batch-size", short = 'M')]
        m_batch: usize,
        #[arg(long, default_value_t = 8)]
        m: u32,
        #[arg(long)]
        hops: usize,
        #[arg(long)]
        homogeneous: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, msg }) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
