use crate::lattice::{Label, Topology, BLANK};

use super::PosteriorProvider;

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyResult {
    pub labels: Vec<Label>,
    /// Per-frame argmax labels, blanks included.
    pub frame_labels: Vec<Label>,
    /// Sum of the chosen log-probabilities.
    pub log_score: f64,
}

fn argmax(v: &[f64]) -> Label {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Per-frame argmax in the current decoder state, collapsed according to the
/// topology: CTC-like merges repeats not separated by blank, mono-rnnt emits
/// every non-blank argmax.
pub fn greedy_search(provider: &mut dyn PosteriorProvider, kind: Topology) -> GreedyResult {
    let mut labels = Vec::new();
    let mut frame_labels = Vec::with_capacity(provider.frames());
    let mut log_score = 0.0;
    let mut previous = BLANK;
    for t in 0..provider.frames() {
        let v = provider.log_probs(&labels, t);
        let k = argmax(&v);
        log_score += v[k];
        frame_labels.push(k);
        let emit = match kind {
            Topology::CtcLike => k != BLANK && k != previous,
            Topology::MonoRnnt => k != BLANK,
        };
        if emit {
            labels.push(k);
        }
        previous = k;
    }
    GreedyResult {
        labels,
        frame_labels,
        log_score,
    }
}
