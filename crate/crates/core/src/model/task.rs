use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::Label;

/// Input features (`frames x dim`, row-major) with a reference transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub frames: usize,
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<Label>,
}

const NOISE: f64 = 0.1;

/// A memorization task over `vocab` symbols (blank included).
///
/// Features are noisy one-hot vectors of width `vocab`: each label shows up
/// for 1 to 3 frames, separated by "silence" frames hot at index 0. Adjacent
/// labels always differ.
pub fn make_synthetic_task(seed: u64, count: usize, vocab: usize) -> Vec<Utterance> {
    assert!(vocab >= 3, "need at least two labels to avoid adjacent repeats");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    (0..count)
        .map(|_| {
            let len = rng.gen_range(1..=4);
            let mut labels: Vec<Label> = Vec::with_capacity(len);
            while labels.len() < len {
                let k = rng.gen_range(1..vocab);
                if labels.last() != Some(&k) {
                    labels.push(k);
                }
            }
            let mut hot = vec![0];
            for &k in &labels {
                let repeat = rng.gen_range(1..=3);
                hot.extend(std::iter::repeat_n(k, repeat));
                hot.push(0);
            }
            let features = hot
                .iter()
                .flat_map(|&h| {
                    (0..vocab)
                        .map(|j| f64::from(j == h) + rng.gen_range(-NOISE..NOISE))
                        .collect::<Vec<_>>()
                })
                .collect();
            Utterance {
                frames: hot.len(),
                dim: vocab,
                features,
                labels,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{min_frames, Topology};

    #[test]
    fn deterministic_and_feasible() {
        let a = make_synthetic_task(9, 20, 6);
        assert_eq!(a, make_synthetic_task(9, 20, 6));
        assert_ne!(a, make_synthetic_task(10, 20, 6));
        for utt in &a {
            assert_eq!(utt.features.len(), utt.frames * utt.dim);
            assert!(utt.labels.windows(2).all(|w| w[0] != w[1]));
            assert!(utt.labels.iter().all(|&k| (1..6).contains(&k)));
            for kind in Topology::ALL {
                assert!(min_frames(kind, &utt.labels) <= utt.frames);
            }
        }
    }
}
