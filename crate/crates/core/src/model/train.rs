use crate::decode::greedy_search;
use crate::lattice::Topology;
use crate::loss::LossError;

use super::{make_synthetic_task, Checkpoint, Dims, ToyModel, Utterance};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub topology: Topology,
    pub seed: u64,
    pub utterances: usize,
    /// Output vocabulary, blank included.
    pub vocab: usize,
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            topology: Topology::CtcLike,
            seed: 0,
            utterances: 20,
            vocab: 6,
            hidden: 16,
            steps: 500,
            lr: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean loss before each step taken in this run.
    pub losses: Vec<f64>,
    /// Fraction of utterances whose greedy transcript is exactly right.
    pub exact_match: f64,
}

/// Fraction of `data` decoded exactly by greedy search.
pub fn greedy_exact_match(model: &ToyModel, data: &[Utterance], kind: Topology) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .iter()
        .filter(|utt| greedy_search(&mut model.provider(utt), kind).labels == utt.labels)
        .count();
    hits as f64 / data.len() as f64
}

/// Rebuilds the training set a checkpoint was trained on.
pub fn task_for(ckpt: &Checkpoint) -> Vec<Utterance> {
    make_synthetic_task(ckpt.seed, ckpt.utterances, ckpt.model.dims.vocab)
}

/// Fresh model and data from `cfg`, trained for `cfg.steps` steps.
pub fn train_toy(cfg: &TrainConfig) -> Result<(Checkpoint, TrainReport), LossError> {
    let dims = Dims {
        input: cfg.vocab,
        hidden: cfg.hidden,
        vocab: cfg.vocab,
    };
    let model = ToyModel::new(dims, cfg.seed);
    let data = make_synthetic_task(cfg.seed, cfg.utterances, cfg.vocab);
    let initial_loss = model.mean_loss(&data, cfg.topology)?;
    let ckpt = Checkpoint {
        model,
        topology: cfg.topology,
        seed: cfg.seed,
        utterances: cfg.utterances,
        step: 0,
        lr: cfg.lr,
        initial_loss,
    };
    continue_training(ckpt, cfg.steps)
}

/// Runs `steps` more SGD steps from a checkpoint, on its own task and rate.
pub fn continue_training(mut ckpt: Checkpoint, steps: usize) -> Result<(Checkpoint, TrainReport), LossError> {
    let data = task_for(&ckpt);
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let stats = ckpt.model.train_step(&data, ckpt.topology, ckpt.lr)?;
        losses.push(stats.mean_loss);
        ckpt.step += 1;
        log::debug!("step {} loss {:.6}", ckpt.step, stats.mean_loss);
    }
    let final_loss = ckpt.model.mean_loss(&data, ckpt.topology)?;
    let report = TrainReport {
        initial_loss: ckpt.initial_loss,
        final_loss,
        losses,
        exact_match: greedy_exact_match(&ckpt.model, &data, ckpt.topology),
    };
    Ok((ckpt, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resume_matches_uninterrupted_run() {
        let cfg = TrainConfig {
            utterances: 4,
            hidden: 8,
            steps: 6,
            ..Default::default()
        };
        let (full, _) = train_toy(&cfg).unwrap();
        let (half, _) = train_toy(&TrainConfig { steps: 3, ..cfg }).unwrap();
        let mut buf = Vec::new();
        crate::model::save_checkpoint(&half, &mut buf).unwrap();
        let loaded = crate::model::load_checkpoint(&buf[..]).unwrap();
        let (resumed, _) = continue_training(loaded, 3).unwrap();
        assert_eq!(resumed, full);
    }
}
