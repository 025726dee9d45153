//! Brute-force references for verifying the dynamic programs in [`crate::loss`].
//!
//! Nothing here calls into the production recursions: paths are enumerated
//! explicitly, CTC and MonoRNN-T use their textbook index-based recursions,
//! and finite differences are taken over the enumerated marginal.

use thiserror::Error;

use crate::lattice::{Label, Lattice, BLANK};
use crate::tensor::PosteriorTensor;

/// Largest frame count accepted by the enumeration routines.
pub const MAX_FRAMES: usize = 8;
/// Largest lattice (including start and end) accepted by the enumeration routines.
pub const MAX_NODES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("refusing exhaustive enumeration: {0}")]
    TooLarge(String),
    #[error("infeasible length: no alignment of {frames} frames exists")]
    Infeasible { frames: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// One start-to-end alignment: `nodes` is `(pi_0, ..., pi_{T+1})` and
/// `edges[tau]` is the lattice edge from `nodes[tau]` to `nodes[tau + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentPath {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl AlignmentPath {
    /// Sum of edge log-weights and emission log-probabilities along the path.
    pub fn log_prob(&self, lat: &Lattice, post: &PosteriorTensor) -> f64 {
        let mut total = 0.0;
        for (tau, &idx) in self.edges.iter().enumerate() {
            let e = lat.edge(idx);
            total += e.log_weight;
            if let (Some(state), Some(label)) = (e.state, lat.kind(e.to).emitted()) {
                total += post.log_prob(tau, state, label);
            }
        }
        total
    }

    /// Labels emitted along the path, blanks included.
    pub fn emissions(&self, lat: &Lattice) -> Vec<Label> {
        self.nodes[1..self.nodes.len() - 1]
            .iter()
            .map(|&g| lat.kind(g).emitted().expect("inner path nodes emit"))
            .collect()
    }
}

fn lse(values: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &v in values {
        if v > best {
            best = v;
        }
    }
    if best == f64::NEG_INFINITY {
        return best;
    }
    let mut s = 0.0;
    for &v in values {
        s += (v - best).exp();
    }
    best + s.ln()
}

fn guard(lat: &Lattice, frames: usize) -> Result<(), OracleError> {
    if frames > MAX_FRAMES || lat.num_nodes() > MAX_NODES {
        return Err(OracleError::TooLarge(format!(
            "{frames} frames and {} nodes exceed the limits of {MAX_FRAMES} frames and {MAX_NODES} nodes",
            lat.num_nodes()
        )));
    }
    Ok(())
}

/// All start-to-end paths with exactly `frames` emitting steps.
pub fn enumerate_paths(lat: &Lattice, frames: usize) -> Result<Vec<AlignmentPath>, OracleError> {
    guard(lat, frames)?;
    let mut out = Vec::new();
    let mut nodes = vec![lat.start()];
    let mut edges = Vec::new();
    extend(lat, frames, &mut nodes, &mut edges, &mut out);
    Ok(out)
}

fn extend(
    lat: &Lattice,
    frames: usize,
    nodes: &mut Vec<usize>,
    edges: &mut Vec<usize>,
    out: &mut Vec<AlignmentPath>,
) {
    let here = *nodes.last().unwrap();
    let emitted = edges.len();
    for (idx, e) in lat.edges().iter().enumerate() {
        if e.from != here {
            continue;
        }
        let to_end = e.to == lat.end();
        if to_end != (emitted == frames) {
            continue;
        }
        nodes.push(e.to);
        edges.push(idx);
        if to_end {
            out.push(AlignmentPath {
                nodes: nodes.clone(),
                edges: edges.clone(),
            });
        } else {
            extend(lat, frames, nodes, edges, out);
        }
        nodes.pop();
        edges.pop();
    }
}

/// Log marginal by explicit summation over every alignment.
pub fn brute_force_marginal(lat: &Lattice, post: &PosteriorTensor) -> Result<f64, OracleError> {
    let paths = enumerate_paths(lat, post.frames())?;
    if paths.is_empty() {
        return Err(OracleError::Infeasible {
            frames: post.frames(),
        });
    }
    let scores: Vec<f64> = paths.iter().map(|p| p.log_prob(lat, post)).collect();
    Ok(lse(&scores))
}

/// Central finite differences of `-ln p(G|X)` with respect to every logit.
pub fn finite_diff_grad(
    lat: &Lattice,
    post: &PosteriorTensor,
    step: f64,
) -> Result<Vec<f64>, OracleError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(OracleError::Parameter(format!("step must be positive, got {step}")));
    }
    guard(lat, post.frames())?;
    let base = post.logits().to_vec();
    let loss_at = |logits: Vec<f64>| -> Result<f64, OracleError> {
        let shifted = post
            .with_logits(logits)
            .map_err(|e| OracleError::Parameter(e.to_string()))?;
        Ok(-brute_force_marginal(lat, &shifted)?)
    };
    let mut grad = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        let mut plus = base.clone();
        plus[j] += step;
        let mut minus = base.clone();
        minus[j] -= step;
        grad.push((loss_at(plus)? - loss_at(minus)?) / (2.0 * step));
    }
    Ok(grad)
}

/// Textbook CTC loss over the blank-interleaved label sequence.
/// `log_probs[t][k]` are per-frame label log-probabilities.
pub fn reference_ctc(labels: &[Label], log_probs: &[Vec<f64>]) -> Result<f64, OracleError> {
    let frames = log_probs.len();
    let mut ext = vec![BLANK];
    for &k in labels {
        ext.push(k);
        ext.push(BLANK);
    }
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    let mut prev = vec![ninf; s_len];
    if frames == 0 {
        return Err(OracleError::Infeasible { frames });
    }
    prev[0] = log_probs[0][ext[0]];
    if s_len > 1 {
        prev[1] = log_probs[0][ext[1]];
    }
    for row in log_probs.iter().skip(1) {
        let mut cur = vec![ninf; s_len];
        for s in 0..s_len {
            let mut terms = vec![prev[s]];
            if s >= 1 {
                terms.push(prev[s - 1]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                terms.push(prev[s - 2]);
            }
            cur[s] = lse(&terms) + row[ext[s]];
        }
        prev = cur;
    }
    let finals: Vec<f64> = if s_len > 1 {
        vec![prev[s_len - 1], prev[s_len - 2]]
    } else {
        vec![prev[0]]
    };
    let log_p = lse(&finals);
    if log_p == ninf {
        return Err(OracleError::Infeasible { frames });
    }
    Ok(-log_p)
}

/// MonoRNN-T loss by the direct `(t, u)` recursion with one emission per
/// frame. `log_probs[t][u][k]` is the distribution after `u` labels.
pub fn reference_monornnt(labels: &[Label], log_probs: &[Vec<Vec<f64>>]) -> Result<f64, OracleError> {
    let frames = log_probs.len();
    let u_len = labels.len();
    let ninf = f64::NEG_INFINITY;
    // alpha[u]: probability of having emitted u labels after the current frame.
    let mut alpha = vec![ninf; u_len + 1];
    alpha[0] = 0.0;
    for row in log_probs {
        let mut next = vec![ninf; u_len + 1];
        for u in 0..=u_len {
            let stay = alpha[u] + row[u][BLANK];
            let advance = if u > 0 {
                alpha[u - 1] + row[u - 1][labels[u - 1]]
            } else {
                ninf
            };
            next[u] = lse(&[stay, advance]);
        }
        alpha = next;
    }
    let log_p = alpha[u_len];
    if frames == 0 || log_p == ninf {
        return Err(OracleError::Infeasible { frames });
    }
    Ok(-log_p)
}

/// Number of CTC alignments of `labels` over `frames`, counted on the
/// blank-interleaved sequence.
pub fn ctc_path_count(labels: &[Label], frames: usize) -> u64 {
    let mut ext = vec![BLANK];
    for &k in labels {
        ext.push(k);
        ext.push(BLANK);
    }
    let s_len = ext.len();
    if frames == 0 {
        return 0;
    }
    let mut prev = vec![0u64; s_len];
    prev[0] = 1;
    if s_len > 1 {
        prev[1] = 1;
    }
    for _ in 1..frames {
        let mut cur = vec![0u64; s_len];
        for s in 0..s_len {
            cur[s] = prev[s];
            if s >= 1 {
                cur[s] += prev[s - 1];
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                cur[s] += prev[s - 2];
            }
        }
        prev = cur;
    }
    if s_len > 1 {
        prev[s_len - 1] + prev[s_len - 2]
    } else {
        prev[0]
    }
}
