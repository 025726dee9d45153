//! `gtct`: verification, toy training, decoding and lattice inspection.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 usage error, 3 data or I/O
//! error.

mod check;
mod decode;
mod graph;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gtct::Topology;

#[derive(Debug)]
pub enum CliError {
    /// A check ran and failed.
    Verify(String),
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Verify(m) | CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(name = "gtct", version, about = "Graph-based transducer loss toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TopologyArg {
    CtcLike,
    MonoRnnt,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::CtcLike => Topology::CtcLike,
            TopologyArg::MonoRnnt => Topology::MonoRnnt,
        }
    }
}

/// Random case generation shared by the check commands.
#[derive(Args, Clone, Debug)]
pub struct CaseArgs {
    /// Restrict to one topology (default: both).
    #[arg(long, value_enum)]
    pub topology: Option<TopologyArg>,
    /// Base seed; case n uses seed + n.
    #[arg(long, default_value_t = 1234)]
    pub seed: u64,
    /// Number of random cases per topology.
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    /// Largest number of frames T.
    #[arg(long)]
    pub max_t: Option<usize>,
    /// Largest transcript length U.
    #[arg(long)]
    pub max_u: Option<usize>,
    /// Largest vocabulary size, blank included.
    #[arg(long)]
    pub vocab: Option<usize>,
}

impl CaseArgs {
    pub fn topologies(&self) -> Vec<Topology> {
        match self.topology {
            Some(t) => vec![t.into()],
            None => Topology::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mutation {
    FlipSign,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic gradients with finite differences on random cases.
    CheckGrad {
        #[command(flatten)]
        cases: CaseArgs,
        /// Inject a known bug into the gradient to confirm the check fails.
        #[arg(long, value_enum, hide = true)]
        mutate: Option<Mutation>,
    },
    /// Compare the DP marginal with brute force, across frames, and against
    /// reference CTC and MonoRNN-T recursions.
    CheckOracle {
        #[command(flatten)]
        cases: CaseArgs,
    },
    /// Train the toy model on a synthetic memorization task.
    TrainToy(train::TrainArgs),
    /// Decode with greedy and prefix beam search.
    Decode(decode::DecodeArgs),
    /// Build a training lattice and print it as JSON or DOT.
    DumpGraph(graph::DumpArgs),
    /// Loss and gradient of a posterior tensor on a lattice file.
    Loss {
        /// Lattice JSON file.
        #[arg(long)]
        graph: PathBuf,
        /// Posterior logits in the binary tensor format, shape T x I x K.
        #[arg(long)]
        tensor: PathBuf,
        /// Directory to write `grad.gtct` into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::CheckGrad { cases, mutate } => check::check_grad(&cases, mutate),
        Command::CheckOracle { cases } => check::check_oracle(&cases),
        Command::TrainToy(args) => train::run(&args),
        Command::Decode(args) => decode::run(&args),
        Command::DumpGraph(args) => graph::dump(&args),
        Command::Loss { graph, tensor, out } => graph::loss(&graph, &tensor, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
