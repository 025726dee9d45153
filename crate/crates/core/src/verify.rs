//! Seeded randomized verification of the loss against the oracles.
//!
//! Every case is generated from its own seed (`base + index`), so a failing
//! case can be replayed in isolation with `cases = 1`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::decode::{
    beam_search, greedy_search, DecodeConfig, DecodeError, LanguageModel, TensorProvider, UniformLm,
};
use crate::lattice::{build, min_frames, Label, Lattice, Topology, TopologySpec};
use crate::loss::{backward_vars, forward_vars, loss_and_grad_mutated, marginal, GradMutation, LossError};
use crate::model::{ToyModel, Utterance};
use crate::oracle::{self, OracleError};
use crate::tensor::PosteriorTensor;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("case seed {seed} ({topology}): {source}")]
    Loss {
        seed: u64,
        topology: Topology,
        #[source]
        source: LossError,
    },
    #[error("case seed {seed} ({topology}): {source}")]
    Oracle {
        seed: u64,
        topology: Topology,
        #[source]
        source: OracleError,
    },
}

/// Size limits for random cases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseParams {
    pub max_frames: usize,
    pub max_labels: usize,
    /// Largest vocabulary, blank included. At least 2.
    pub max_vocab: usize,
    /// Logits are drawn uniformly from `[-logit_scale, logit_scale]`.
    pub logit_scale: f64,
}

impl CaseParams {
    pub fn new(max_frames: usize, max_labels: usize, max_vocab: usize) -> Self {
        Self {
            max_frames,
            max_labels,
            max_vocab,
            logit_scale: 3.0,
        }
    }
}

/// A random `(lattice, posterior)` pair.
#[derive(Clone, Debug)]
pub struct RandomCase {
    pub seed: u64,
    pub topology: Topology,
    pub labels: Vec<Label>,
    pub lattice: Lattice,
    pub post: PosteriorTensor,
}

pub fn case_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Draws vocabulary, labels, frame count and logits from `seed`.
///
/// The frame count is drawn from the feasible range for the sampled labels;
/// when even `max_frames` is too short the case uses `max_frames` and is
/// infeasible.
pub fn random_case(seed: u64, topology: Topology, params: &CaseParams) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.gen_range(2..=params.max_vocab.max(2));
    let u_len = rng.gen_range(0..=params.max_labels);
    let labels: Vec<Label> = (0..u_len).map(|_| rng.gen_range(1..vocab)).collect();
    let need = min_frames(topology, &labels);
    let frames = if need <= params.max_frames {
        rng.gen_range(need..=params.max_frames)
    } else {
        params.max_frames.max(1)
    };
    let states = u_len + 1;
    let logits = (0..frames * states * vocab)
        .map(|_| rng.gen_range(-params.logit_scale..=params.logit_scale))
        .collect();
    let post = PosteriorTensor::from_logits(frames, states, vocab, logits).expect("valid shape");
    let lattice = build(&TopologySpec::new(topology, labels.clone(), vocab)).expect("valid labels");
    RandomCase {
        seed,
        topology,
        labels,
        lattice,
        post,
    }
}

/// Scale floor for gradient comparisons. Central differences with a step of
/// `1e-5` carry rounding noise of about `eps * loss / step` (around `1e-10`
/// for losses near 10), so entries smaller than this are effectively held to
/// an absolute tolerance of `1e-6 * FD_SCALE_FLOOR`.
pub const FD_SCALE_FLOOR: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, FD_SCALE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_SCALE_FLOOR)
}

/// Location of the worst deviation seen by a check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Worst {
    pub seed: u64,
    pub topology: Topology,
    pub t: usize,
    pub state: usize,
    pub label: usize,
}

impl fmt::Display for Worst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "seed={} topology={} t={} i={} k={}",
            self.seed, self.topology, self.t, self.state, self.label
        )
    }
}

/// Maximum deviation over a set of cases, plus the largest marginal
/// probability observed along the way.
#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub cases: usize,
    pub max_deviation: f64,
    pub max_probability: f64,
    pub worst: Option<Worst>,
}

impl Deviation {
    fn new() -> Self {
        Self {
            cases: 0,
            max_deviation: 0.0,
            max_probability: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, deviation: f64, at: Worst) {
        if deviation > self.max_deviation || self.worst.is_none() {
            self.max_deviation = self.max_deviation.max(deviation);
            self.worst = Some(at);
        }
    }

    fn observe_marginal(&mut self, log_marginal: f64) {
        self.max_probability = self.max_probability.max(log_marginal.exp());
    }
}

fn loss_err(case: &RandomCase) -> impl FnOnce(LossError) -> CheckError + '_ {
    move |source| CheckError::Loss {
        seed: case.seed,
        topology: case.topology,
        source,
    }
}

fn oracle_err(case: &RandomCase) -> impl FnOnce(OracleError) -> CheckError + '_ {
    move |source| CheckError::Oracle {
        seed: case.seed,
        topology: case.topology,
        source,
    }
}

fn at(case: &RandomCase) -> Worst {
    Worst {
        seed: case.seed,
        topology: case.topology,
        t: 0,
        state: 0,
        label: 0,
    }
}

fn cases_for<'a>(
    seed: u64,
    cases: usize,
    topologies: &'a [Topology],
    params: &CaseParams,
) -> impl Iterator<Item = RandomCase> + 'a {
    let params = *params;
    (0..cases).flat_map(move |idx| {
        topologies
            .iter()
            .map(move |&kind| random_case(case_seed(seed, idx), kind, &params))
    })
}

/// |DP log marginal - brute-force log marginal| over random cases.
pub fn check_oracle_equivalence(
    seed: u64,
    cases: usize,
    topologies: &[Topology],
    params: &CaseParams,
) -> Result<Deviation, CheckError> {
    let mut dev = Deviation::new();
    for case in cases_for(seed, cases, topologies, params) {
        let res = loss_and_grad_mutated(&case.lattice, &case.post, GradMutation::None)
            .map_err(loss_err(&case))?;
        let brute = oracle::brute_force_marginal(&case.lattice, &case.post).map_err(oracle_err(&case))?;
        dev.cases += 1;
        dev.observe_marginal(res.log_marginal);
        dev.record((res.log_marginal - brute).abs(), at(&case));
    }
    Ok(dev)
}

/// Result of comparing analytic and finite-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub relative: Deviation,
    /// Largest |sum over k of grad[t][i][k]| seen.
    pub max_row_sum: f64,
}

/// Analytic gradient against central finite differences of the
/// brute-force loss.
pub fn check_gradients(
    seed: u64,
    cases: usize,
    topologies: &[Topology],
    params: &CaseParams,
    step: f64,
    mutation: GradMutation,
) -> Result<GradientReport, CheckError> {
    let mut dev = Deviation::new();
    let mut max_row_sum: f64 = 0.0;
    for case in cases_for(seed, cases, topologies, params) {
        let res = loss_and_grad_mutated(&case.lattice, &case.post, mutation).map_err(loss_err(&case))?;
        let numeric = oracle::finite_diff_grad(&case.lattice, &case.post, step).map_err(oracle_err(&case))?;
        dev.cases += 1;
        dev.observe_marginal(res.log_marginal);
        let (states, vocab) = (res.states, res.vocab);
        for (j, (&a, &n)) in res.grad.iter().zip(&numeric).enumerate() {
            let w = Worst {
                seed: case.seed,
                topology: case.topology,
                t: j / (states * vocab),
                state: (j / vocab) % states,
                label: j % vocab,
            };
            dev.record(relative_error(a, n), w);
        }
        for row in res.grad.chunks(vocab) {
            max_row_sum = max_row_sum.max(row.iter().sum::<f64>().abs());
        }
    }
    Ok(GradientReport {
        relative: dev,
        max_row_sum,
    })
}

/// Spread of the marginal assembled at every frame `t` around frame 1.
pub fn check_t_invariance(
    seed: u64,
    cases: usize,
    topologies: &[Topology],
    params: &CaseParams,
) -> Result<Deviation, CheckError> {
    let mut dev = Deviation::new();
    for case in cases_for(seed, cases, topologies, params) {
        let alpha = forward_vars(&case.lattice, &case.post).map_err(loss_err(&case))?;
        let beta = backward_vars(&case.lattice, &case.post).map_err(loss_err(&case))?;
        let first = marginal(&case.lattice, &case.post, &alpha, &beta, 1).map_err(loss_err(&case))?;
        if first == f64::NEG_INFINITY {
            return Err(loss_err(&case)(LossError::InfeasibleLength {
                frames: case.post.frames(),
                required: min_frames(case.topology, &case.labels),
            }));
        }
        dev.cases += 1;
        dev.observe_marginal(first);
        for t in 2..=case.post.frames() {
            let m = marginal(&case.lattice, &case.post, &alpha, &beta, t).map_err(loss_err(&case))?;
            let mut w = at(&case);
            w.t = t;
            dev.record((m - first).abs(), w);
        }
    }
    Ok(dev)
}

/// Copies decoder state 0 into every other state.
pub fn tie_states(post: &PosteriorTensor) -> PosteriorTensor {
    let mut logits = post.logits().to_vec();
    let vocab = post.vocab();
    for t in 0..post.frames() {
        let src = post.offset(t, 0);
        for i in 1..post.states() {
            let dst = post.offset(t, i);
            let row: Vec<f64> = logits[src..src + vocab].to_vec();
            logits[dst..dst + vocab].copy_from_slice(&row);
        }
    }
    post.with_logits(logits).expect("same shape")
}

/// CTC-like loss with state-independent posteriors against textbook CTC.
pub fn check_ctc_reduction(seed: u64, cases: usize, params: &CaseParams) -> Result<Deviation, CheckError> {
    let mut dev = Deviation::new();
    for mut case in cases_for(seed, cases, &[Topology::CtcLike], params) {
        case.post = tie_states(&case.post);
        let res = loss_and_grad_mutated(&case.lattice, &case.post, GradMutation::None)
            .map_err(loss_err(&case))?;
        let rows: Vec<Vec<f64>> = (0..case.post.frames())
            .map(|t| case.post.log_probs_row(t, 0).to_vec())
            .collect();
        let reference = oracle::reference_ctc(&case.labels, &rows).map_err(oracle_err(&case))?;
        dev.cases += 1;
        dev.observe_marginal(res.log_marginal);
        dev.record((res.loss - reference).abs(), at(&case));
    }
    Ok(dev)
}

/// MonoRNN-T lattice loss against the direct `(t, u)` recursion.
pub fn check_monornnt_reduction(seed: u64, cases: usize, params: &CaseParams) -> Result<Deviation, CheckError> {
    let mut dev = Deviation::new();
    for case in cases_for(seed, cases, &[Topology::MonoRnnt], params) {
        let res = loss_and_grad_mutated(&case.lattice, &case.post, GradMutation::None)
            .map_err(loss_err(&case))?;
        let rows: Vec<Vec<Vec<f64>>> = (0..case.post.frames())
            .map(|t| {
                (0..case.post.states())
                    .map(|i| case.post.log_probs_row(t, i).to_vec())
                    .collect()
            })
            .collect();
        let reference = oracle::reference_monornnt(&case.labels, &rows).map_err(oracle_err(&case))?;
        dev.cases += 1;
        dev.observe_marginal(res.log_marginal);
        dev.record((res.loss - reference).abs(), at(&case));
    }
    Ok(dev)
}

/// Outcome of comparing beam search with exhaustive decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamReport {
    pub cases: usize,
    pub mismatches: usize,
    /// Largest |beam log-probability - exhaustive best log-marginal|.
    pub max_score_gap: f64,
    pub first_mismatch: Option<u64>,
}

/// Number of label sequences of length at most `frames` over `vocab - 1` labels.
pub fn prefix_count(frames: usize, vocab: usize) -> usize {
    (0..=frames).map(|u| (vocab - 1).pow(u as u32)).sum()
}

fn random_decode_case(seed: u64, max_frames: usize, max_vocab: usize) -> PosteriorTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.gen_range(1..=max_frames.max(1));
    let vocab = rng.gen_range(2..=max_vocab.max(2));
    let states = frames + 1;
    let logits = (0..frames * states * vocab).map(|_| rng.gen_range(-3.0..=3.0)).collect();
    PosteriorTensor::from_logits(frames, states, vocab, logits).expect("valid shape")
}

/// Keeps the first `states` decoder states.
pub fn truncate_states(post: &PosteriorTensor, states: usize) -> PosteriorTensor {
    let mut logits = Vec::with_capacity(post.frames() * states * post.vocab());
    for t in 0..post.frames() {
        for i in 0..states {
            let o = post.offset(t, i);
            logits.extend_from_slice(&post.logits()[o..o + post.vocab()]);
        }
    }
    PosteriorTensor::from_logits(post.frames(), states, post.vocab(), logits).expect("valid shape")
}

/// Best label sequence by exact CTC-like marginal, over every sequence the
/// tensor can score. Ties go to the lexicographically smaller sequence.
pub fn exhaustive_decode(post: &PosteriorTensor) -> (Vec<Label>, f64) {
    let vocab = post.vocab();
    let mut best: (Vec<Label>, f64) = (Vec::new(), f64::NEG_INFINITY);
    let mut stack: Vec<Vec<Label>> = vec![Vec::new()];
    while let Some(seq) = stack.pop() {
        if seq.len() < post.states() - 1 && seq.len() < post.frames() {
            for k in (1..vocab).rev() {
                let mut next = seq.clone();
                next.push(k);
                stack.push(next);
            }
        }
        let lat = build(&TopologySpec::new(Topology::CtcLike, seq.clone(), vocab)).expect("valid labels");
        let score = match loss_and_grad_mutated(&lat, &truncate_states(post, seq.len() + 1), GradMutation::None) {
            Ok(res) => res.log_marginal,
            Err(LossError::InfeasibleLength { .. }) => continue,
            Err(e) => panic!("exhaustive decode: {e}"),
        };
        if score > best.1 || (score == best.1 && seq < best.0) {
            best = (seq, score);
        }
    }
    best
}

/// Unpruned beam search against [`exhaustive_decode`] on tiny tensors.
pub fn check_beam_exactness(seed: u64, cases: usize, max_frames: usize, max_vocab: usize) -> BeamReport {
    let mut report = BeamReport {
        cases: 0,
        mismatches: 0,
        max_score_gap: 0.0,
        first_mismatch: None,
    };
    for idx in 0..cases {
        let s = case_seed(seed, idx);
        let post = random_decode_case(s, max_frames, max_vocab);
        let cfg = DecodeConfig {
            theta1: 0.0,
            theta2: f64::INFINITY,
            beam: prefix_count(post.frames(), post.vocab()),
            ..DecodeConfig::default()
        };
        let out = beam_search(&mut TensorProvider::new(&post), &cfg, &UniformLm).expect("valid config");
        let (prefix, score) = exhaustive_decode(&post);
        report.cases += 1;
        report.max_score_gap = report.max_score_gap.max((out.log_prob - score).abs());
        if out.prefix != prefix {
            report.mismatches += 1;
            report.first_mismatch.get_or_insert(s);
        }
    }
    report
}

/// Largest drop of the best beam score when the beam widens from `P` to
/// `P + 1`, over every `P` up to the unpruned width.
pub fn check_beam_widening(seed: u64, cases: usize, max_frames: usize, max_vocab: usize, theta1: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for idx in 0..cases {
        let post = random_decode_case(case_seed(seed, idx), max_frames, max_vocab);
        let mut last = f64::NEG_INFINITY;
        for beam in 1..=prefix_count(post.frames(), post.vocab()) {
            let cfg = DecodeConfig {
                theta1,
                beam,
                ..DecodeConfig::default()
            };
            let out = beam_search(&mut TensorProvider::new(&post), &cfg, &UniformLm).expect("valid config");
            worst = worst.max(last - out.score);
            last = out.score;
        }
    }
    worst
}

/// Exact CTC-like log-probabilities of the greedy and beam transcripts of
/// one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeComparison {
    pub greedy: Vec<Label>,
    pub beam: Vec<Label>,
    pub greedy_score: f64,
    pub beam_score: f64,
}

/// Decodes every utterance with greedy and prefix beam search and scores
/// both transcripts with the exact marginal.
pub fn compare_beam_greedy(
    model: &ToyModel,
    data: &[Utterance],
    cfg: &DecodeConfig,
    lm: &dyn LanguageModel,
) -> Result<Vec<DecodeComparison>, DecodeError> {
    data.iter()
        .map(|utt| {
            let greedy = greedy_search(&mut model.provider(utt), Topology::CtcLike).labels;
            let beam = beam_search(&mut model.provider(utt), cfg, lm)?.prefix;
            Ok(DecodeComparison {
                greedy_score: model.log_marginal(utt, &greedy, Topology::CtcLike),
                beam_score: model.log_marginal(utt, &beam, Topology::CtcLike),
                greedy,
                beam,
            })
        })
        .collect()
}
