use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use gtct::lattice::{build, deserialize, serialize, validate};
use gtct::tensor::RawTensor;
use gtct::{loss_and_grad, Label, PosteriorTensor, TopologySpec};

use crate::{CliError, CliResult, TopologyArg};

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(long, value_enum, default_value = "ctc-like")]
    pub topology: TopologyArg,
    /// Transcript as label ids, e.g. "1,2" or "1 2". Empty for no labels.
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    pub labels: String,
    /// Vocabulary size, blank included (default: largest label + 1).
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Print Graphviz DOT instead of JSON.
    #[arg(long)]
    pub dot: bool,
}

pub fn parse_labels(text: &str) -> Result<Vec<Label>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Usage(format!("invalid label '{s}' in --labels")))
        })
        .collect()
}

pub fn dump(args: &DumpArgs) -> CliResult {
    let labels = parse_labels(&args.labels)?;
    let vocab = args
        .vocab
        .unwrap_or_else(|| labels.iter().max().map_or(2, |m| m + 1));
    let lat = build(&TopologySpec::new(args.topology.into(), labels, vocab))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let violations = validate(&lat);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Verify(format!("built lattice is invalid: {}", list.join("; "))));
    }
    let text = if args.dot {
        lat.to_dot()
    } else {
        serialize(&lat).map_err(|e| CliError::Verify(e.to_string()))? + "\n"
    };
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Data(e.to_string())),
        _ => Ok(()),
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_tensor(path: &Path) -> Result<PosteriorTensor, CliError> {
    let data = |e: String| CliError::Data(format!("{}: {e}", path.display()));
    let f = File::open(path).map_err(|e| data(e.to_string()))?;
    let raw = RawTensor::read_from(std::io::BufReader::new(f)).map_err(|e| data(e.to_string()))?;
    PosteriorTensor::from_raw(&raw).map_err(|e| data(e.to_string()))
}

pub fn loss(graph: &Path, tensor: &Path, out: Option<&Path>) -> CliResult {
    let lat = deserialize(&read_to_string(graph)?).map_err(|e| CliError::Data(format!("{}: {e}", graph.display())))?;
    let post = read_tensor(tensor)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    let res = loss_and_grad(&lat, &post).map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "frames={} states={} vocab={} loss={:.12} log_marginal={:.12}",
        res.frames, res.states, res.vocab, res.loss, res.log_marginal
    );
    if let Some(dir) = out {
        let path: PathBuf = dir.join("grad.gtct");
        let raw = RawTensor::new(vec![res.frames, res.states, res.vocab], res.grad.clone())
            .map_err(|e| CliError::Data(e.to_string()))?;
        let f = File::create(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        raw.write_to(&mut w)
            .and_then(|()| w.flush().map_err(Into::into))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
