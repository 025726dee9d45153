//! Decoding: prefix beam search for the CTC-like topology with LM shallow
//! fusion, and topology-aware greedy search.

mod beam;
mod greedy;
mod lm;

pub use beam::{beam_search, prune, BeamResult, BeamState};
pub use greedy::{greedy_search, GreedyResult};
pub use lm::{LanguageModel, LmError, NgramLm, UniformLm, SOS};

use thiserror::Error;

use crate::lattice::Label;
use crate::tensor::PosteriorTensor;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error("decoder produced no hypotheses at frame {0}")]
    EmptyBeam(usize),
}

/// Source of label posteriors for a hypothesis prefix at a frame.
pub trait PosteriorProvider {
    fn frames(&self) -> usize;
    fn vocab(&self) -> usize;
    /// Log-probabilities over the vocabulary at frame `t` (0-based) for the
    /// decoder state reached after emitting `prefix` (blank-free, no ⟨sos⟩).
    fn log_probs(&mut self, prefix: &[Label], t: usize) -> Vec<f64>;
}

/// Serves a fixed tensor, indexing decoder states by prefix length.
/// Prefixes longer than the last state reuse the last state.
pub struct TensorProvider<'a> {
    post: &'a PosteriorTensor,
}

impl<'a> TensorProvider<'a> {
    pub fn new(post: &'a PosteriorTensor) -> Self {
        Self { post }
    }
}

impl PosteriorProvider for TensorProvider<'_> {
    fn frames(&self) -> usize {
        self.post.frames()
    }

    fn vocab(&self) -> usize {
        self.post.vocab()
    }

    fn log_probs(&mut self, prefix: &[Label], t: usize) -> Vec<f64> {
        let state = prefix.len().min(self.post.states() - 1);
        self.post.log_probs_row(t, state).to_vec()
    }
}

/// Levenshtein distance between two label sequences.
pub fn edit_distance(a: &[Label], b: &[Label]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeamKind {
    Greedy,
    PrefixBeam,
}

/// Search parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeConfig {
    /// Labels whose posterior does not exceed this are skipped (linear domain).
    pub theta1: f64,
    /// Hypotheses scoring below `best - theta2` are dropped (log domain).
    pub theta2: f64,
    /// Maximum number of hypotheses kept per frame.
    pub beam: usize,
    pub lm_weight: f64,
    pub insertion_bonus: f64,
    pub kind: BeamKind,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            theta1: 0.0,
            theta2: f64::INFINITY,
            beam: 10,
            lm_weight: 0.0,
            insertion_bonus: 0.0,
            kind: BeamKind::PrefixBeam,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam < 1 {
            return Err(DecodeError::Config("beam size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.theta1) {
            return Err(DecodeError::Config(format!(
                "theta1 must lie in [0, 1), got {}",
                self.theta1
            )));
        }
        if self.theta2.is_nan() || self.theta2 <= 0.0 {
            return Err(DecodeError::Config(format!(
                "theta2 must be positive, got {}",
                self.theta2
            )));
        }
        if !self.lm_weight.is_finite() || !self.insertion_bonus.is_finite() {
            return Err(DecodeError::Config("LM weight and insertion bonus must be finite".into()));
        }
        Ok(())
    }
}
