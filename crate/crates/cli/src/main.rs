mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use hegcn_core::costmodel::CostError;
use hegcn_core::prune::PruneError;
use hegcn_core::EngineError;

/// Encrypted ST-GCN inference on a leveled-HE SIMD simulator.
#[derive(Parser, Debug)]
#[command(name = "hegcn", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Encrypted inference; writes scores.json, hoc.csv and levels.json.
    Infer(InferArgs),
    /// AMA vs row-major counts next to the analytic baselines.
    Compare(CompareArgs),
    /// Pick ring degree and modulus for a level budget.
    Params(ParamsArgs),
    /// Activation pruning search.
    Prune(PruneArgs),
    /// Per-layer operation counts as CSV (layer, op, format, count).
    Hoc(HocArgs),
    /// Show how an input is laid out in ciphertexts.
    Pack(PackArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Ama,
    Rowmajor,
    Both,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Spec JSON path or `preset:NAME` (64-stgcn-3, 128-stgcn-3, tiny).
    #[arg(long, default_value = "preset:tiny")]
    pub model: String,
    /// Override the batch size.
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct HeArgs {
    /// Slots per ciphertext; defaults to N/2 of the selected parameters.
    #[arg(long)]
    pub slots: Option<usize>,
    /// Level budget of the context; defaults to the model depth.
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long, default_value_t = 80)]
    pub security_bits: u32,
    #[arg(long, default_value_t = 33)]
    pub scale_bits: u32,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").args(["input", "seed"])))]
pub struct InferArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Input tensor file (JSON header line + little-endian f64, BCTJ).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Seed for a random input when no file is given.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    pub format: FormatArg,
    #[command(flatten)]
    pub he: HeArgs,
    /// Round every slot to the scale grid.
    #[arg(long)]
    pub quantize: bool,
    /// Also write the operation log as JSON lines.
    #[arg(long)]
    pub log: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Batch sizes to sweep, comma separated.
    #[arg(long = "batches", value_delimiter = ',', default_value = "1")]
    pub batches: Vec<usize>,
    #[command(flatten)]
    pub he: HeArgs,
    /// Run the simulator instead of the closed-form schedule.
    #[arg(long)]
    pub measure: bool,
    /// Directory for compare.json and per-batch CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    #[arg(long)]
    pub levels: u32,
    #[arg(long, default_value_t = 80)]
    pub security_bits: u32,
    #[arg(long, default_value_t = 33)]
    pub scale_bits: u32,
    /// Extra modulus bits for the base and special primes.
    #[arg(long, default_value_t = hegcn_core::costmodel::DEFAULT_MARGIN_BITS)]
    pub margin_bits: u32,
    /// Security table JSON replacing the built-in one.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("evaluator").required(true).args(["stub", "stub_builtin", "evaluator_cmd"])))]
pub struct PruneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 2)]
    pub max_prune: usize,
    /// Stub accuracy table JSON.
    #[arg(long)]
    pub stub: Option<PathBuf>,
    /// Built-in stub table (baseline, 1 and 2 pruned activations).
    #[arg(long)]
    pub stub_builtin: bool,
    /// Command run per variant: spec JSON on stdin, {"accuracy": x} on stdout.
    #[arg(long)]
    pub evaluator_cmd: Option<String>,
    #[arg(long, default_value_t = 80)]
    pub security_bits: u32,
    #[arg(long, default_value_t = 33)]
    pub scale_bits: u32,
    /// Write prune.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct HocArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    pub format: FormatArg,
    #[command(flatten)]
    pub he: HeArgs,
    /// Run the simulator instead of the closed-form schedule.
    #[arg(long)]
    pub measure: bool,
    /// Append the analytic per-layer rows as `<format>-formula`.
    #[arg(long)]
    pub formula: bool,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").args(["input", "seed"])))]
pub struct PackArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    pub format: FormatArg,
    #[command(flatten)]
    pub he: HeArgs,
    /// Save the (random or loaded) input tensor here.
    #[arg(long)]
    pub write_input: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DEPTH: u8 = 3;
const EXIT_PARAMS: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(EngineError::DepthExceeded { .. }) = cause.downcast_ref() {
            return EXIT_DEPTH;
        }
        if let Some(CostError::NoParameters { .. }) = cause.downcast_ref() {
            return EXIT_PARAMS;
        }
        if let Some(PruneError::Params { .. }) = cause.downcast_ref() {
            return EXIT_PARAMS;
        }
    }
    EXIT_CONFIG
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("HEGCN_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("HEGCN_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

// Die quietly on a closed pipe (`hegcn hoc | head`) instead of panicking in println!.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    let run = init_threads().and_then(|_| match cli.cmd {
        Cmd::Infer(a) => commands::infer(a),
        Cmd::Compare(a) => commands::compare(a),
        Cmd::Params(a) => commands::params(a),
        Cmd::Prune(a) => commands::prune(a),
        Cmd::Hoc(a) => commands::hoc(a),
        Cmd::Pack(a) => commands::pack(a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
