use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::lattice::{Label, BLANK};
use crate::logspace::log_add;

use super::{BeamKind, DecodeConfig, DecodeError, LanguageModel, PosteriorProvider};

/// A prefix hypothesis with log-probabilities of ending in blank / non-blank.
///
/// The prefix excludes ⟨sos⟩. Decoder state is derived from the prefix by the
/// posterior provider, which caches it.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamState {
    pub prefix: Vec<Label>,
    pub log_b: f64,
    pub log_nb: f64,
}

impl BeamState {
    pub fn log_prob(&self) -> f64 {
        log_add(self.log_b, self.log_nb)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamResult {
    pub prefix: Vec<Label>,
    /// Fused score `ln(p_b + p_nb) + α ln p_LM + β ln |ℓ|`.
    pub score: f64,
    /// Acoustic prefix log-probability `ln(p_b + p_nb)`.
    pub log_prob: f64,
    /// Surviving hypotheses after the last frame, best first.
    pub beam: Vec<(BeamState, f64)>,
}

fn by_score(a: &(Vec<Label>, f64), b: &(Vec<Label>, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Keeps the `p` best hypotheses, then drops those scoring below
/// `best - theta2`. Equal scores are ordered by prefix, smaller first.
pub fn prune(mut hyps: Vec<(Vec<Label>, f64)>, p: usize, theta2: f64) -> Vec<(Vec<Label>, f64)> {
    hyps.sort_by(by_score);
    hyps.truncate(p);
    if let Some(best) = hyps.first().map(|h| h.1) {
        let floor = best - theta2;
        hyps.retain(|h| h.1 >= floor);
    }
    hyps
}

#[derive(Clone, Copy)]
struct Probs {
    b: f64,
    nb: f64,
}

const EMPTY: Probs = Probs {
    b: f64::NEG_INFINITY,
    nb: f64::NEG_INFINITY,
};

fn fused_score(prefix: &[Label], probs: Probs, cfg: &DecodeConfig, lm: &dyn LanguageModel) -> f64 {
    let mut score = log_add(probs.b, probs.nb);
    if cfg.lm_weight != 0.0 {
        score += cfg.lm_weight * lm.score(prefix);
    }
    if cfg.insertion_bonus != 0.0 {
        // |ℓ| = 0 would send the bonus to -inf for β > 0.
        score += cfg.insertion_bonus * (prefix.len().max(1) as f64).ln();
    }
    score
}

/// Frame-synchronous prefix beam search over the CTC-like topology.
pub fn beam_search(
    provider: &mut dyn PosteriorProvider,
    cfg: &DecodeConfig,
    lm: &dyn LanguageModel,
) -> Result<BeamResult, DecodeError> {
    cfg.validate()?;
    if cfg.kind != BeamKind::PrefixBeam {
        return Err(DecodeError::Config("beam search requires the prefix-beam kind".into()));
    }
    let vocab = provider.vocab();

    let mut prev: BTreeMap<Vec<Label>, Probs> = BTreeMap::new();
    prev.insert(Vec::new(), Probs { b: 0.0, nb: f64::NEG_INFINITY });
    let mut pruned: Vec<(Vec<Label>, f64)> = vec![(Vec::new(), 0.0)];
    // Ω_prev starts empty, so nothing can be revived at the first frame.
    let mut seen_prev = false;

    for t in 0..provider.frames() {
        let mut next: BTreeMap<Vec<Label>, Probs> = BTreeMap::new();
        let in_pruned: BTreeSet<&[Label]> = pruned.iter().map(|h| h.0.as_slice()).collect();

        for (prefix, _) in &pruned {
            let last = prefix.last().copied();
            let before = prev.get(prefix).copied().unwrap_or(EMPTY);
            let v = provider.log_probs(prefix, t);
            debug_assert_eq!(v.len(), vocab);
            let cands: Vec<Label> = (0..vocab)
                .filter(|&k| k == BLANK || v[k].exp() > cfg.theta1)
                .collect();

            for &k in &cands {
                if k == BLANK {
                    let e = next.entry(prefix.clone()).or_insert(EMPTY);
                    e.b = log_add(e.b, v[BLANK] + log_add(before.b, before.nb));
                    if let Some(end) = last {
                        if !cands.contains(&end) {
                            e.nb = log_add(e.nb, v[end] + before.nb);
                        }
                    }
                    continue;
                }
                let mut plus = prefix.clone();
                plus.push(k);
                if last == Some(k) {
                    let e = next.entry(plus.clone()).or_insert(EMPTY);
                    e.nb = log_add(e.nb, v[k] + before.b);
                    let e = next.entry(prefix.clone()).or_insert(EMPTY);
                    e.nb = log_add(e.nb, v[k] + before.nb);
                } else {
                    let e = next.entry(plus.clone()).or_insert(EMPTY);
                    e.nb = log_add(e.nb, v[k] + log_add(before.b, before.nb));
                }
                if seen_prev && !in_pruned.contains(plus.as_slice()) {
                    if let Some(&old) = prev.get(&plus) {
                        let vj = provider.log_probs(&plus, t);
                        let e = next.entry(plus).or_insert(EMPTY);
                        e.b = log_add(e.b, vj[BLANK] + log_add(old.b, old.nb));
                        e.nb = log_add(e.nb, vj[k] + old.nb);
                    }
                }
            }
        }

        let scored: Vec<(Vec<Label>, f64)> = next
            .iter()
            .map(|(prefix, &probs)| (prefix.clone(), fused_score(prefix, probs, cfg, lm)))
            .collect();
        pruned = prune(scored, cfg.beam, cfg.theta2);
        if pruned.is_empty() {
            return Err(DecodeError::EmptyBeam(t));
        }
        prev = next;
        seen_prev = true;
    }

    let beam: Vec<(BeamState, f64)> = pruned
        .into_iter()
        .map(|(prefix, score)| {
            let p = prev.get(&prefix).copied().unwrap_or(EMPTY);
            (BeamState { prefix, log_b: p.b, log_nb: p.nb }, score)
        })
        .collect();
    let (best, score) = beam[0].clone();
    Ok(BeamResult {
        log_prob: best.log_prob(),
        prefix: best.prefix,
        score,
        beam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{NgramLm, TensorProvider, UniformLm};
    use crate::tensor::PosteriorTensor;

    fn cfg(beam: usize) -> DecodeConfig {
        DecodeConfig { beam, ..Default::default() }
    }

    #[test]
    fn one_frame_hand_trace() {
        // υ = softmax(0, 2, 0) over (∅, a, b).
        let post = PosteriorTensor::from_logits(1, 2, 3, vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let out = beam_search(&mut TensorProvider::new(&post), &cfg(4), &UniformLm).unwrap();
        assert_eq!(out.prefix, vec![1]);
        let z = (2.0f64.exp() + 2.0).ln();
        assert!((out.log_prob - (2.0 - z)).abs() < 1e-12);
        let prefixes: Vec<_> = out.beam.iter().map(|h| h.0.prefix.clone()).collect();
        assert_eq!(prefixes, vec![vec![1], vec![], vec![2]]);
    }

    #[test]
    fn all_blank_gives_empty_prefix() {
        let frames = 4;
        let mut logits = Vec::new();
        for _ in 0..frames * 3 {
            logits.extend([0.0, -800.0, -800.0]);
        }
        let post = PosteriorTensor::from_logits(frames, 3, 3, logits).unwrap();
        let out = beam_search(&mut TensorProvider::new(&post), &cfg(5), &UniformLm).unwrap();
        assert!(out.prefix.is_empty());
        assert_eq!(out.score, 0.0);
    }

    #[test]
    fn repeated_label_needs_blank() {
        // Frames favour a, ∅, a: the best prefix is (a, a).
        let rows = [[-3.0, 3.0, -3.0], [3.0, -3.0, -3.0], [-3.0, 3.0, -3.0]];
        let mut logits = Vec::new();
        for row in rows {
            for _ in 0..4 {
                logits.extend(row);
            }
        }
        let post = PosteriorTensor::from_logits(3, 4, 3, logits).unwrap();
        let out = beam_search(&mut TensorProvider::new(&post), &cfg(8), &UniformLm).unwrap();
        assert_eq!(out.prefix, vec![1, 1]);
    }

    #[test]
    fn prefix_probabilities_stay_normalized() {
        let logits: Vec<f64> = (0..3 * 4 * 3).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let post = PosteriorTensor::from_logits(3, 4, 3, logits).unwrap();
        let out = beam_search(&mut TensorProvider::new(&post), &cfg(100), &UniformLm).unwrap();
        for (h, score) in &out.beam {
            assert!(h.log_prob() <= 1e-9);
            assert_eq!(*score, h.log_prob());
        }
    }

    #[test]
    fn zero_weights_match_uniform_bitwise() {
        let logits: Vec<f64> = (0..4 * 5 * 4).map(|i| ((i * 11) % 7) as f64 * 0.5 - 1.5).collect();
        let post = PosteriorTensor::from_logits(4, 5, 4, logits).unwrap();
        let lm = NgramLm::from_counts("<s>\t1\t9\n1\t3\t4\n", 4).unwrap();
        let a = beam_search(&mut TensorProvider::new(&post), &cfg(6), &lm).unwrap();
        let b = beam_search(&mut TensorProvider::new(&post), &cfg(6), &UniformLm).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lm_weight_shifts_the_result() {
        // Acoustics slightly favour b; a strong LM prefers a.
        let post = PosteriorTensor::from_logits(1, 2, 3, vec![-5.0, 0.0, 0.2, -5.0, 0.0, 0.2]).unwrap();
        let lm = NgramLm::from_counts("<s>\t1\t100\n", 3).unwrap();
        let plain = beam_search(&mut TensorProvider::new(&post), &cfg(4), &lm).unwrap();
        assert_eq!(plain.prefix, vec![2]);
        let fused = DecodeConfig { lm_weight: 1.0, ..cfg(4) };
        let out = beam_search(&mut TensorProvider::new(&post), &fused, &lm).unwrap();
        assert_eq!(out.prefix, vec![1]);
    }

    #[test]
    fn rejects_greedy_kind() {
        let post = PosteriorTensor::from_logits(1, 1, 2, vec![0.0, 0.0]).unwrap();
        let c = DecodeConfig { kind: BeamKind::Greedy, ..cfg(2) };
        assert!(beam_search(&mut TensorProvider::new(&post), &c, &UniformLm).is_err());
    }

    #[test]
    fn prune_keeps_top_p() {
        let hyps = vec![
            (vec![1], -3.0),
            (vec![2], -1.0),
            (vec![3], -5.0),
            (vec![1, 2], -2.0),
            (vec![], -4.0),
        ];
        let kept = prune(hyps, 2, f64::INFINITY);
        assert_eq!(kept, vec![(vec![2], -1.0), (vec![1, 2], -2.0)]);
    }

    #[test]
    fn prune_threshold() {
        let eps = 1e-9;
        let theta2 = 2.0;
        let kept = prune(vec![(vec![1], 0.0), (vec![2], -theta2 - eps)], 5, theta2);
        assert_eq!(kept.len(), 1);
        let kept = prune(vec![(vec![1], 0.0), (vec![2], -theta2 + eps)], 5, theta2);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn prune_ties_are_lexicographic() {
        let hyps = vec![(vec![2], -1.0), (vec![1, 3], -1.0), (vec![1], -0.5)];
        let kept = prune(hyps, 2, f64::INFINITY);
        assert_eq!(kept, vec![(vec![1], -0.5), (vec![1, 3], -1.0)]);
    }
}
