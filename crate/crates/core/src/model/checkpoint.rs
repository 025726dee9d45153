//! Checkpoint file: one JSON header line, then the five parameter tensors in
//! the binary tensor format, in the order `enc_w enc_b embed join_w join_b`.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dims, Params, ToyModel};
use crate::lattice::Topology;
use crate::tensor::{RawTensor, TensorError};

const FORMAT: &str = "gtct-toy-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint tensor: {0}")]
    Tensor(#[from] TensorError),
}

/// A model plus what is needed to resume training on the same task.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ToyModel,
    pub topology: Topology,
    /// Seed of the synthetic task and the initialization.
    pub seed: u64,
    pub utterances: usize,
    pub step: usize,
    pub lr: f64,
    /// Mean training loss before the first step.
    pub initial_loss: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    topology: String,
    seed: u64,
    utterances: usize,
    step: usize,
    lr: f64,
    initial_loss: f64,
    input: usize,
    hidden: usize,
    vocab: usize,
}

pub fn save_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<(), CheckpointError> {
    let Dims { input, hidden, vocab } = ckpt.model.dims;
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        topology: ckpt.topology.name().into(),
        seed: ckpt.seed,
        utterances: ckpt.utterances,
        step: ckpt.step,
        lr: ckpt.lr,
        initial_loss: ckpt.initial_loss,
        input,
        hidden,
        vocab,
    };
    let line = serde_json::to_string(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    writeln!(w, "{line}")?;
    let shapes = shapes(ckpt.model.dims);
    for (data, dims) in ckpt.model.params.tensors().into_iter().zip(shapes) {
        RawTensor::new(dims, data.clone())?.write_to(&mut w)?;
    }
    Ok(())
}

fn shapes(d: Dims) -> [Vec<usize>; 5] {
    [
        vec![d.hidden, d.input],
        vec![d.hidden],
        vec![d.vocab, d.hidden],
        vec![d.vocab, d.hidden],
        vec![d.vocab],
    ]
}

pub fn load_checkpoint<R: Read>(r: R) -> Result<Checkpoint, CheckpointError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if h.format != FORMAT || h.version != VERSION {
        return Err(CheckpointError::Header(format!(
            "unsupported format {} version {}",
            h.format, h.version
        )));
    }
    let topology: Topology = h.topology.parse().map_err(CheckpointError::Header)?;
    let dims = Dims {
        input: h.input,
        hidden: h.hidden,
        vocab: h.vocab,
    };
    let mut tensors = Vec::with_capacity(5);
    for (name, want) in ["enc_w", "enc_b", "embed", "join_w", "join_b"].into_iter().zip(shapes(dims)) {
        let raw = RawTensor::read_from(&mut r)?;
        if raw.dims != want {
            return Err(CheckpointError::Header(format!(
                "{name} has shape {:?}, expected {want:?}",
                raw.dims
            )));
        }
        tensors.push(raw.data);
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("five tensors");
    let params = Params {
        enc_w: next(),
        enc_b: next(),
        embed: next(),
        join_w: next(),
        join_b: next(),
    };
    Ok(Checkpoint {
        model: ToyModel { dims, params },
        topology,
        seed: h.seed,
        utterances: h.utterances,
        step: h.step,
        lr: h.lr,
        initial_loss: h.initial_loss,
    })
}
