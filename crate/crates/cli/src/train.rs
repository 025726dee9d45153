use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use gtct::model::{continue_training, load_checkpoint, save_checkpoint, train_toy, Checkpoint, TrainConfig, TrainReport};

use crate::{CliError, CliResult, TopologyArg};

pub const CHECKPOINT_FILE: &str = "checkpoint.gtct";
pub const LOSS_FILE: &str = "loss.tsv";

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "ctc-like", conflicts_with = "resume")]
    pub topology: TopologyArg,
    /// Seed for the task data and the initialization.
    #[arg(long, default_value_t = 7, conflicts_with = "resume")]
    pub seed: u64,
    /// SGD steps to run (in addition to those already in a resumed checkpoint).
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.2, conflicts_with = "resume")]
    pub lr: f64,
    #[arg(long, default_value_t = 16, conflicts_with = "resume")]
    pub hidden: usize,
    /// Vocabulary size, blank included.
    #[arg(long, default_value_t = 6, conflicts_with = "resume")]
    pub vocab: usize,
    #[arg(long, default_value_t = 20, conflicts_with = "resume")]
    pub utterances: usize,
    /// Output directory for the checkpoint and loss curve.
    #[arg(long, default_value = "toy-run")]
    pub out: PathBuf,
    /// Continue training from a checkpoint file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let f = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    load_checkpoint(f).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_outputs(out: &Path, ckpt: &Checkpoint, report: &TrainReport) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Data(format!("{}: {e}", out.display()));
    let path = out.join(CHECKPOINT_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    save_checkpoint(ckpt, &mut w).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    w.flush().map_err(io)?;

    let mut w = BufWriter::new(File::create(out.join(LOSS_FILE)).map_err(io)?);
    writeln!(w, "step\tloss").map_err(io)?;
    let first = ckpt.step - report.losses.len();
    for (n, loss) in report.losses.iter().enumerate() {
        writeln!(w, "{}\t{loss:.17e}", first + n).map_err(io)?;
    }
    writeln!(w, "{}\t{:.17e}", ckpt.step, report.final_loss).map_err(io)?;
    w.flush().map_err(io)
}

pub fn run(args: &TrainArgs) -> CliResult {
    if !(args.lr.is_finite() && args.lr >= 0.0) {
        return Err(CliError::Usage("--lr must be a finite non-negative number".into()));
    }
    if args.hidden == 0 || args.utterances == 0 {
        return Err(CliError::Usage("--hidden and --utterances must be positive".into()));
    }
    if args.vocab < 3 {
        return Err(CliError::Usage("--vocab must be at least 3 for the synthetic task".into()));
    }
    let resumed = args.resume.as_deref().map(read_checkpoint).transpose()?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;

    let (ckpt, report) = match resumed {
        Some(ckpt) => {
            println!(
                "train-toy resume step={} topology={} seed={} utterances={} hidden={} lr={}",
                ckpt.step, ckpt.topology, ckpt.seed, ckpt.utterances, ckpt.model.dims.hidden, ckpt.lr
            );
            continue_training(ckpt, args.steps)
        }
        None => {
            let cfg = TrainConfig {
                topology: args.topology.into(),
                seed: args.seed,
                utterances: args.utterances,
                vocab: args.vocab,
                hidden: args.hidden,
                steps: args.steps,
                lr: args.lr,
            };
            println!(
                "train-toy topology={} seed={} utterances={} vocab={} hidden={} lr={} steps={}",
                cfg.topology, cfg.seed, cfg.utterances, cfg.vocab, cfg.hidden, cfg.lr, cfg.steps
            );
            train_toy(&cfg)
        }
    }
    .map_err(|e| CliError::Data(e.to_string()))?;

    write_outputs(&args.out, &ckpt, &report)?;
    let ratio = report.final_loss / report.initial_loss;
    println!("initial_loss={:.6}", report.initial_loss);
    if let Some(first) = report.losses.first() {
        println!("start_step={} start_loss={first:.12}", ckpt.step - report.losses.len());
    }
    println!("final_loss={:.6} step={} ratio={ratio:.4}", report.final_loss, ckpt.step);
    println!("greedy_exact_match={:.2}", report.exact_match);
    println!(
        "wrote {} and {}",
        args.out.join(CHECKPOINT_FILE).display(),
        args.out.join(LOSS_FILE).display()
    );
    Ok(())
}
