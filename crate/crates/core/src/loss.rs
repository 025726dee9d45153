//! Exact log-space GTC-T marginal, loss and gradient.
//!
//! Frame indices in the tables are 1-based (`0..=T`, row 0 is the
//! initialization row) while [`PosteriorTensor`] frames are 0-based, so table
//! row `t` pairs with posterior frame `t - 1`.

use std::collections::VecDeque;

use thiserror::Error;

use crate::lattice::Lattice;
use crate::logspace::log_add;
use crate::tensor::PosteriorTensor;

const NEG_INF: f64 = f64::NEG_INFINITY;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("posterior tensor does not match lattice: {0}")]
    Shape(String),
    #[error("infeasible length: {frames} frames, but every path needs at least {required}")]
    InfeasibleLength { frames: usize, required: usize },
    #[error("lattice has no start-to-end path")]
    NoPath,
    #[error("frame index {t} outside 1..={frames}")]
    FrameOutOfRange { t: usize, frames: usize },
}

/// `(T + 1) x (G + 2)` table of log-domain forward or backward variables.
#[derive(Clone, Debug, PartialEq)]
pub struct LogTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LogTable {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![NEG_INF; rows * cols],
        }
    }

    pub fn get(&self, t: usize, g: usize) -> f64 {
        self.data[t * self.cols + g]
    }

    fn set(&mut self, t: usize, g: usize, v: f64) {
        self.data[t * self.cols + g] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    /// Number of rows, `T + 1`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// Loss, log marginal and `dL/dh` shaped like the logits `(T, I, K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    pub log_marginal: f64,
    pub grad: Vec<f64>,
    pub frames: usize,
    pub states: usize,
    pub vocab: usize,
}

impl LossResult {
    pub fn grad_at(&self, t: usize, i: usize, k: usize) -> f64 {
        self.grad[(t * self.states + i) * self.vocab + k]
    }

    pub fn grad_row(&self, t: usize, i: usize) -> &[f64] {
        let o = (t * self.states + i) * self.vocab;
        &self.grad[o..o + self.vocab]
    }
}

/// Deliberate corruptions of the gradient formula, used to prove that the
/// gradient checker can fail.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradMutation {
    #[default]
    None,
    /// Adds the edge-occupancy term instead of subtracting it.
    FlipSign,
}

/// Minimum emissions needed to reach each node from start, and from each node
/// to end. `None` when unreachable.
struct Distances {
    from_start: Vec<Option<usize>>,
    to_end: Vec<Option<usize>>,
}

impl Distances {
    fn new(lat: &Lattice) -> Self {
        let n = lat.num_nodes();
        let mut from_start = vec![None; n];
        from_start[lat.start()] = Some(0);
        let mut queue = VecDeque::from([lat.start()]);
        while let Some(g) = queue.pop_front() {
            for &e in lat.outgoing(g) {
                let h = lat.edge(e).to;
                if from_start[h].is_none() {
                    from_start[h] = Some(from_start[g].unwrap() + 1);
                    queue.push_back(h);
                }
            }
        }
        // Edges into end emit nothing, so nodes with an end edge are at 0.
        let mut to_end = vec![None; n];
        let mut queue = VecDeque::new();
        for &e in lat.incoming(lat.end()) {
            let g = lat.edge(e).from;
            if to_end[g].is_none() {
                to_end[g] = Some(0);
                queue.push_back(g);
            }
        }
        while let Some(g) = queue.pop_front() {
            for &e in lat.incoming(g) {
                let h = lat.edge(e).from;
                if to_end[h].is_none() {
                    to_end[h] = Some(to_end[g].unwrap() + 1);
                    queue.push_back(h);
                }
            }
        }
        Self { from_start, to_end }
    }

    fn alive_forward(&self, g: usize, t: usize, frames: usize) -> bool {
        matches!((self.from_start[g], self.to_end[g]), (Some(s), Some(e)) if s <= t && e <= frames - t)
    }

    fn alive_backward(&self, g: usize, t: usize, frames: usize) -> bool {
        matches!(self.to_end[g], Some(e) if e <= frames - t)
    }

    /// Shortest start-to-end path length in emissions.
    fn required_frames(&self, lat: &Lattice) -> Option<usize> {
        lat.outgoing(lat.start())
            .iter()
            .filter_map(|&e| self.to_end[lat.edge(e).to].map(|d| d + 1))
            .min()
    }
}

fn check_compat(lat: &Lattice, post: &PosteriorTensor) -> Result<(), LossError> {
    if post.states() != lat.num_states() {
        return Err(LossError::Shape(format!(
            "tensor has {} decoder states, lattice uses {}",
            post.states(),
            lat.num_states()
        )));
    }
    if post.vocab() != lat.vocab_size() {
        return Err(LossError::Shape(format!(
            "tensor vocabulary {} differs from lattice vocabulary {}",
            post.vocab(),
            lat.vocab_size()
        )));
    }
    for e in lat.edges() {
        if let Some(s) = e.state {
            if s >= post.states() {
                return Err(LossError::Shape(format!("edge state {s} out of range")));
            }
            if let Some(k) = lat.kind(e.to).emitted() {
                if k >= post.vocab() {
                    return Err(LossError::Shape(format!("label {k} out of range")));
                }
            }
        }
    }
    Ok(())
}

/// Emitting edge as `(from, to, log_weight, state, label)`.
fn emitting_edges(lat: &Lattice) -> impl Iterator<Item = (usize, usize, f64, usize, usize)> + '_ {
    lat.edges().iter().filter_map(|e| {
        let k = lat.kind(e.to).emitted()?;
        Some((e.from, e.to, e.log_weight, e.state?, k))
    })
}

fn forward_with(lat: &Lattice, post: &PosteriorTensor, dist: &Distances) -> LogTable {
    let frames = post.frames();
    let mut alpha = LogTable::new(frames + 1, lat.num_nodes());
    alpha.set(0, lat.start(), 0.0);
    for t in 1..=frames {
        for g in 1..lat.end() {
            if !dist.alive_forward(g, t, frames) {
                continue;
            }
            let Some(k) = lat.kind(g).emitted() else {
                continue;
            };
            let mut acc = NEG_INF;
            for &idx in lat.incoming(g) {
                let e = lat.edge(idx);
                let prev = alpha.get(t - 1, e.from);
                if prev == NEG_INF {
                    continue;
                }
                let state = e.state.expect("emitting edge has a state");
                acc = log_add(acc, prev + e.log_weight + post.log_prob(t - 1, state, k));
            }
            alpha.set(t, g, acc);
        }
    }
    let mut total = NEG_INF;
    for &idx in lat.incoming(lat.end()) {
        let e = lat.edge(idx);
        total = log_add(total, alpha.get(frames, e.from) + e.log_weight);
    }
    alpha.set(frames, lat.end(), total);
    alpha
}

fn backward_with(lat: &Lattice, post: &PosteriorTensor, dist: &Distances) -> LogTable {
    let frames = post.frames();
    let mut beta = LogTable::new(frames + 1, lat.num_nodes());
    for &idx in lat.incoming(lat.end()) {
        let e = lat.edge(idx);
        let cur = beta.get(frames, e.from);
        beta.set(frames, e.from, log_add(cur, e.log_weight));
    }
    beta.set(frames, lat.end(), 0.0);
    for t in (0..frames).rev() {
        for g in 0..lat.end() {
            // Row 0 only carries the start node's total.
            if (t == 0) != (g == lat.start()) || !dist.alive_backward(g, t, frames) {
                continue;
            }
            let mut acc = NEG_INF;
            for &idx in lat.outgoing(g) {
                let e = lat.edge(idx);
                let (Some(k), Some(state)) = (lat.kind(e.to).emitted(), e.state) else {
                    continue;
                };
                let next = beta.get(t + 1, e.to);
                if next == NEG_INF {
                    continue;
                }
                acc = log_add(acc, next + e.log_weight + post.log_prob(t, state, k));
            }
            beta.set(t, g, acc);
        }
    }
    beta
}

/// Forward variables: `alpha[t][g]` is the log-probability mass of all
/// complete alignments that sit in node `g` after `t` emissions.
///
/// Row `T` additionally stores the log marginal in the end-node column.
pub fn forward_vars(lat: &Lattice, post: &PosteriorTensor) -> Result<LogTable, LossError> {
    check_compat(lat, post)?;
    Ok(forward_with(lat, post, &Distances::new(lat)))
}

/// Backward variables: `beta[t][g]` is the log-probability of finishing from
/// node `g` after `t` emissions, including the end-edge weight.
///
/// Row 0 stores the log marginal in the start-node column.
pub fn backward_vars(lat: &Lattice, post: &PosteriorTensor) -> Result<LogTable, LossError> {
    check_compat(lat, post)?;
    Ok(backward_with(lat, post, &Distances::new(lat)))
}

/// Log marginal assembled from the forward and backward variables around
/// frame `t` (1-based). Identical for every `t` up to rounding.
pub fn marginal(
    lat: &Lattice,
    post: &PosteriorTensor,
    alpha: &LogTable,
    beta: &LogTable,
    t: usize,
) -> Result<f64, LossError> {
    if t == 0 || t > post.frames() {
        return Err(LossError::FrameOutOfRange {
            t,
            frames: post.frames(),
        });
    }
    let mut acc = NEG_INF;
    for (from, to, logw, state, k) in emitting_edges(lat) {
        let a = alpha.get(t - 1, from);
        let b = beta.get(t, to);
        if a == NEG_INF || b == NEG_INF {
            continue;
        }
        acc = log_add(acc, a + logw + post.log_prob(t - 1, state, k) + b);
    }
    Ok(acc)
}

/// Posterior probability of occupying each emitting node at each frame, as a
/// `frames x nodes` row-major table. Every row sums to 1; the start and end
/// columns are 0.
pub fn node_occupancy(lat: &Lattice, post: &PosteriorTensor) -> Result<Vec<f64>, LossError> {
    check_compat(lat, post)?;
    let dist = Distances::new(lat);
    let required = dist.required_frames(lat).ok_or(LossError::NoPath)?;
    let alpha = forward_with(lat, post, &dist);
    let log_p = alpha.get(post.frames(), lat.end());
    if log_p == NEG_INF {
        return Err(LossError::InfeasibleLength {
            frames: post.frames(),
            required,
        });
    }
    let beta = backward_with(lat, post, &dist);
    let nodes = lat.num_nodes();
    let mut out = Vec::with_capacity(post.frames() * nodes);
    for t in 1..=post.frames() {
        for g in 0..nodes {
            let occ = if g == lat.end() {
                0.0
            } else {
                (alpha.get(t, g) + beta.get(t, g) - log_p).exp()
            };
            out.push(occ);
        }
    }
    Ok(out)
}

/// Loss `-ln p(G|X)` and its gradient with respect to the logits.
pub fn loss_and_grad(lat: &Lattice, post: &PosteriorTensor) -> Result<LossResult, LossError> {
    loss_and_grad_mutated(lat, post, GradMutation::None)
}

#[doc(hidden)]
pub fn loss_and_grad_mutated(
    lat: &Lattice,
    post: &PosteriorTensor,
    mutation: GradMutation,
) -> Result<LossResult, LossError> {
    check_compat(lat, post)?;
    let dist = Distances::new(lat);
    let frames = post.frames();
    let states = post.states();
    let vocab = post.vocab();

    let required = dist.required_frames(lat).ok_or(LossError::NoPath)?;
    let alpha = forward_with(lat, post, &dist);
    let log_p = alpha.get(frames, lat.end());
    if log_p == NEG_INF {
        return Err(LossError::InfeasibleLength { frames, required });
    }
    let beta = backward_with(lat, post, &dist);

    let edges: Vec<_> = emitting_edges(lat).collect();
    let mut grad = vec![0.0; frames * states * vocab];
    // Per frame: log of sum over edges with state i of alpha * W * beta, split
    // by target label (occupancy without the emission factor), and the same
    // sum including the emission factor.
    let mut by_label = vec![NEG_INF; states * vocab];
    let mut by_state = vec![NEG_INF; states];
    for t in 1..=frames {
        by_label.fill(NEG_INF);
        by_state.fill(NEG_INF);
        for &(from, to, logw, state, k) in &edges {
            let a = alpha.get(t - 1, from);
            let b = beta.get(t, to);
            if a == NEG_INF || b == NEG_INF {
                continue;
            }
            let v = a + logw + b;
            let slot = state * vocab + k;
            by_label[slot] = log_add(by_label[slot], v);
            by_state[state] = log_add(by_state[state], v + post.log_prob(t - 1, state, k));
        }
        for i in 0..states {
            if by_state[i] == NEG_INF {
                continue;
            }
            let o = post.offset(t - 1, i);
            let lp_row = post.log_probs_row(t - 1, i);
            for k in 0..vocab {
                let lp = lp_row[k];
                let total = (lp + by_state[i] - log_p).exp();
                let own = (lp + by_label[i * vocab + k] - log_p).exp();
                grad[o + k] = match mutation {
                    GradMutation::None => total - own,
                    GradMutation::FlipSign => total + own,
                };
            }
        }
    }

    Ok(LossResult {
        loss: -log_p,
        log_marginal: log_p,
        grad,
        frames,
        states,
        vocab,
    })
}
