use std::fs;
use std::path::PathBuf;

use clap::Args;
use gtct::decode::{
    beam_search, edit_distance, greedy_search, BeamKind, DecodeConfig, LanguageModel, NgramLm, TensorProvider,
    UniformLm,
};
use gtct::model::task_for;
use gtct::verify::compare_beam_greedy;
use gtct::{Label, Topology};

use crate::graph::read_tensor;
use crate::train::read_checkpoint;
use crate::{CliError, CliResult, TopologyArg};

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Toy model checkpoint; decodes its training set.
    #[arg(long, required_unless_present = "tensor", conflicts_with = "tensor")]
    pub checkpoint: Option<PathBuf>,
    /// Posterior logits (T x I x K binary tensor); decoder state = prefix length.
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    /// Topology for greedy collapse with --tensor (checkpoints carry their own).
    #[arg(long, value_enum, default_value = "ctc-like")]
    pub topology: TopologyArg,
    /// Beam size P.
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    /// Skip labels whose posterior is at most this.
    #[arg(long, default_value_t = 0.0)]
    pub theta1: f64,
    /// Drop hypotheses scoring more than this below the best.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub theta2: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lm_weight: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub insertion_bonus: f64,
    /// n-gram counts file (context<TAB>label<TAB>count per line).
    #[arg(long)]
    pub lm_counts: Option<PathBuf>,
}

fn fmt_labels(labels: &[Label]) -> String {
    let parts: Vec<String> = labels.iter().map(|k| k.to_string()).collect();
    format!("[{}]", parts.join(","))
}

pub fn run(args: &DecodeArgs) -> CliResult {
    let cfg = DecodeConfig {
        theta1: args.theta1,
        theta2: args.theta2,
        beam: args.beam,
        lm_weight: args.lm_weight,
        insertion_bonus: args.insertion_bonus,
        kind: BeamKind::PrefixBeam,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let counts = match &args.lm_counts {
        Some(path) => Some(
            fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let lm_for = |vocab: usize| -> Result<Box<dyn LanguageModel>, CliError> {
        match (&counts, &args.lm_counts) {
            (Some(text), Some(path)) => Ok(Box::new(
                NgramLm::from_counts(text, vocab).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
            )),
            _ => Ok(Box::new(UniformLm)),
        }
    };
    println!(
        "decode beam={} theta1={} theta2={} lm_weight={} insertion_bonus={} lm={}",
        cfg.beam,
        cfg.theta1,
        cfg.theta2,
        cfg.lm_weight,
        cfg.insertion_bonus,
        args.lm_counts
            .as_ref()
            .map_or("uniform".to_string(), |p| p.display().to_string())
    );

    if let Some(path) = &args.tensor {
        let post = read_tensor(path)?;
        let kind: Topology = args.topology.into();
        let lm = lm_for(post.vocab())?;
        let greedy = greedy_search(&mut TensorProvider::new(&post), kind);
        println!("greedy ({kind}) {} log_score={:.6}", fmt_labels(&greedy.labels), greedy.log_score);
        if kind == Topology::CtcLike {
            let out = beam_search(&mut TensorProvider::new(&post), &cfg, lm.as_ref())
                .map_err(|e| CliError::Verify(e.to_string()))?;
            println!(
                "beam {} score={:.6} log_prob={:.6}",
                fmt_labels(&out.prefix),
                out.score,
                out.log_prob
            );
        } else {
            println!("beam search is only defined for the ctc-like topology");
        }
        return Ok(());
    }

    let path = args.checkpoint.as_ref().expect("clap requires checkpoint or tensor");
    let ckpt = read_checkpoint(path)?;
    let data = task_for(&ckpt);
    let kind = ckpt.topology;
    let lm = lm_for(ckpt.model.dims.vocab)?;
    println!(
        "checkpoint {} topology={kind} seed={} step={} utterances={}",
        path.display(),
        ckpt.seed,
        ckpt.step,
        data.len()
    );

    let greedy: Vec<Vec<Label>> = data
        .iter()
        .map(|utt| greedy_search(&mut ckpt.model.provider(utt), kind).labels)
        .collect();
    let comparisons = if kind == Topology::CtcLike {
        Some(compare_beam_greedy(&ckpt.model, &data, &cfg, lm.as_ref()).map_err(|e| CliError::Verify(e.to_string()))?)
    } else {
        println!("beam search is only defined for the ctc-like topology; greedy only");
        None
    };

    let mut greedy_hits = 0;
    let mut beam_hits = 0;
    let mut greedy_edits = 0;
    let mut beam_edits = 0;
    let mut dominated = 0;
    for (n, utt) in data.iter().enumerate() {
        greedy_hits += usize::from(greedy[n] == utt.labels);
        greedy_edits += edit_distance(&greedy[n], &utt.labels);
        match &comparisons {
            Some(c) => {
                let c = &c[n];
                beam_hits += usize::from(c.beam == utt.labels);
                beam_edits += edit_distance(&c.beam, &utt.labels);
                dominated += usize::from(c.beam_score >= c.greedy_score);
                println!(
                    "utt {n} ref={} greedy={} beam={} greedy_logp={:.6} beam_logp={:.6}",
                    fmt_labels(&utt.labels),
                    fmt_labels(&c.greedy),
                    fmt_labels(&c.beam),
                    c.greedy_score,
                    c.beam_score
                );
            }
            None => println!(
                "utt {n} ref={} greedy={}",
                fmt_labels(&utt.labels),
                fmt_labels(&greedy[n])
            ),
        }
    }
    let total = data.len() as f64;
    println!(
        "greedy exact_match={:.4} edit_distance={greedy_edits}",
        greedy_hits as f64 / total
    );
    if comparisons.is_some() {
        println!(
            "beam exact_match={:.4} edit_distance={beam_edits} beam_logp>=greedy_logp on {dominated}/{}",
            beam_hits as f64 / total,
            data.len()
        );
    }
    Ok(())
}
