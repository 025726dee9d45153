//! A toy transducer: one-layer tanh encoder fused with an order-1 label
//! embedding, and a linear joiner. Trained with hand-written backprop.
//!
//! `logits[t][i] = W_j · tanh(W_e x_t + b_e + E[prev_i]) + b_j`, where
//! `prev_i` is the label emitted before state `i` (row 0 of `E` stands for
//! ⟨sos⟩, since blank is never fed back).

mod checkpoint;
mod task;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use task::{make_synthetic_task, Utterance};
pub use train::{continue_training, greedy_exact_match, task_for, train_toy, TrainConfig, TrainReport};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decode::PosteriorProvider;
use crate::lattice::{build, Label, Topology, TopologySpec};
use crate::loss::{loss_and_grad, LossError};
use crate::tensor::PosteriorTensor;

/// Model parameters, also used for gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// `hidden x input`
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    /// `vocab x hidden`
    pub embed: Vec<f64>,
    /// `vocab x hidden`
    pub join_w: Vec<f64>,
    pub join_b: Vec<f64>,
}

impl Params {
    fn zeros(dims: Dims) -> Self {
        Self {
            enc_w: vec![0.0; dims.hidden * dims.input],
            enc_b: vec![0.0; dims.hidden],
            embed: vec![0.0; dims.vocab * dims.hidden],
            join_w: vec![0.0; dims.vocab * dims.hidden],
            join_b: vec![0.0; dims.vocab],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 5] {
        [&self.enc_w, &self.enc_b, &self.embed, &self.join_w, &self.join_b]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.embed,
            &mut self.join_w,
            &mut self.join_b,
        ]
    }

    /// `self += scale * other`
    fn axpy(&mut self, scale: f64, other: &Params) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    /// Output vocabulary, blank included.
    pub vocab: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub dims: Dims,
    pub params: Params,
}

/// Per-step training summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Mean loss over the utterances that contributed.
    pub mean_loss: f64,
    pub used: usize,
    pub skipped: usize,
}

fn predictor_inputs(labels: &[Label]) -> impl Iterator<Item = Label> + '_ {
    std::iter::once(0).chain(labels.iter().copied())
}

impl ToyModel {
    /// Uniform init in `±1/sqrt(fan_in)`.
    pub fn new(dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut fill = |n: usize, fan_in: usize| -> Vec<f64> {
            let r = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-r..r)).collect()
        };
        let params = Params {
            enc_w: fill(dims.hidden * dims.input, dims.input),
            enc_b: vec![0.0; dims.hidden],
            embed: fill(dims.vocab * dims.hidden, 1),
            join_w: fill(dims.vocab * dims.hidden, dims.hidden),
            join_b: vec![0.0; dims.vocab],
        };
        Self { dims, params }
    }

    /// Encoder pre-activations, `frames x hidden`.
    fn encode(&self, utt: &Utterance) -> Vec<f64> {
        let Dims { input, hidden, .. } = self.dims;
        let p = &self.params;
        let mut out = Vec::with_capacity(utt.frames * hidden);
        for t in 0..utt.frames {
            let x = &utt.features[t * input..(t + 1) * input];
            for h in 0..hidden {
                let w = &p.enc_w[h * input..(h + 1) * input];
                out.push(p.enc_b[h] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        out
    }

    fn hidden_state(&self, enc: &[f64], prev: Label) -> Vec<f64> {
        let hidden = self.dims.hidden;
        let e = &self.params.embed[prev * hidden..(prev + 1) * hidden];
        enc.iter().zip(e).map(|(a, b)| (a + b).tanh()).collect()
    }

    fn join(&self, z: &[f64], out: &mut Vec<f64>) {
        let hidden = self.dims.hidden;
        let p = &self.params;
        for k in 0..self.dims.vocab {
            let w = &p.join_w[k * hidden..(k + 1) * hidden];
            out.push(p.join_b[k] + w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>());
        }
    }

    /// Posteriors over `labels.len() + 1` decoder states.
    pub fn forward(&self, utt: &Utterance, labels: &[Label]) -> PosteriorTensor {
        let Dims { hidden, vocab, .. } = self.dims;
        let states = labels.len() + 1;
        let enc = self.encode(utt);
        let mut logits = Vec::with_capacity(utt.frames * states * vocab);
        for t in 0..utt.frames {
            for prev in predictor_inputs(labels) {
                let z = self.hidden_state(&enc[t * hidden..(t + 1) * hidden], prev);
                self.join(&z, &mut logits);
            }
        }
        PosteriorTensor::from_logits(utt.frames, states, vocab, logits).expect("finite logits")
    }

    /// Loss of one utterance and its gradient with respect to the parameters.
    pub fn loss_and_param_grad(
        &self,
        utt: &Utterance,
        kind: Topology,
    ) -> Result<(f64, Params), LossError> {
        let Dims { input, hidden, vocab } = self.dims;
        let lat = build(&TopologySpec::new(kind, utt.labels.clone(), vocab)).map_err(|e| LossError::Shape(e.to_string()))?;
        let post = self.forward(utt, &utt.labels);
        let res = loss_and_grad(&lat, &post)?;
        let p = &self.params;
        let mut g = Params::zeros(self.dims);
        let enc = self.encode(utt);
        for t in 0..utt.frames {
            let x = &utt.features[t * input..(t + 1) * input];
            for (i, prev) in predictor_inputs(&utt.labels).enumerate() {
                let dlogit = res.grad_row(t, i);
                let z = self.hidden_state(&enc[t * hidden..(t + 1) * hidden], prev);
                let mut dz = vec![0.0; hidden];
                for (k, &d) in dlogit.iter().enumerate() {
                    g.join_b[k] += d;
                    let w = &p.join_w[k * hidden..(k + 1) * hidden];
                    let gw = &mut g.join_w[k * hidden..(k + 1) * hidden];
                    for h in 0..hidden {
                        gw[h] += d * z[h];
                        dz[h] += d * w[h];
                    }
                }
                for h in 0..hidden {
                    let da = dz[h] * (1.0 - z[h] * z[h]);
                    g.enc_b[h] += da;
                    g.embed[prev * hidden + h] += da;
                    let gw = &mut g.enc_w[h * input..(h + 1) * input];
                    for (gwi, xi) in gw.iter_mut().zip(x) {
                        *gwi += da * xi;
                    }
                }
            }
        }
        Ok((res.loss, g))
    }

    /// One SGD step on the mean loss of `batch`. Utterances too short for
    /// their transcript are skipped with a warning.
    pub fn train_step(&mut self, batch: &[Utterance], kind: Topology, lr: f64) -> Result<StepStats, LossError> {
        let mut total = Params::zeros(self.dims);
        let mut loss = 0.0;
        let mut used = 0;
        let mut skipped = 0;
        for (n, utt) in batch.iter().enumerate() {
            match self.loss_and_param_grad(utt, kind) {
                Ok((l, g)) => {
                    loss += l;
                    total.axpy(1.0, &g);
                    used += 1;
                }
                Err(e @ (LossError::InfeasibleLength { .. } | LossError::NoPath)) => {
                    log::warn!("skipping utterance {n}: {e}");
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if used > 0 {
            self.params.axpy(-lr / used as f64, &total);
            loss /= used as f64;
        } else {
            loss = f64::NAN;
        }
        Ok(StepStats {
            mean_loss: loss,
            used,
            skipped,
        })
    }

    /// Mean loss over `data`, skipping infeasible utterances.
    pub fn mean_loss(&self, data: &[Utterance], kind: Topology) -> Result<f64, LossError> {
        let mut total = 0.0;
        let mut used = 0;
        for utt in data {
            let lat = build(&TopologySpec::new(kind, utt.labels.clone(), self.dims.vocab))
                .map_err(|e| LossError::Shape(e.to_string()))?;
            match loss_and_grad(&lat, &self.forward(utt, &utt.labels)) {
                Ok(res) => {
                    total += res.loss;
                    used += 1;
                }
                Err(LossError::InfeasibleLength { .. } | LossError::NoPath) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(if used > 0 { total / used as f64 } else { f64::NAN })
    }

    /// Exact log-probability of `labels` under the model and topology, or
    /// `-inf` when no alignment exists.
    pub fn log_marginal(&self, utt: &Utterance, labels: &[Label], kind: Topology) -> f64 {
        let Ok(lat) = build(&TopologySpec::new(kind, labels.to_vec(), self.dims.vocab)) else {
            return f64::NEG_INFINITY;
        };
        loss_and_grad(&lat, &self.forward(utt, labels))
            .map(|r| r.log_marginal)
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn provider<'a>(&'a self, utt: &'a Utterance) -> ModelProvider<'a> {
        ModelProvider {
            model: self,
            utt,
            enc: self.encode(utt),
            cache: HashMap::new(),
        }
    }
}

/// Decoder posteriors computed on demand. The predictor only sees the last
/// label, so results are cached per `(last label, frame)`.
pub struct ModelProvider<'a> {
    model: &'a ToyModel,
    utt: &'a Utterance,
    enc: Vec<f64>,
    cache: HashMap<(Label, usize), Vec<f64>>,
}

impl ModelProvider<'_> {
    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }
}

impl PosteriorProvider for ModelProvider<'_> {
    fn frames(&self) -> usize {
        self.utt.frames
    }

    fn vocab(&self) -> usize {
        self.model.dims.vocab
    }

    fn log_probs(&mut self, prefix: &[Label], t: usize) -> Vec<f64> {
        let prev = prefix.last().copied().unwrap_or(0);
        let hidden = self.model.dims.hidden;
        let (model, enc) = (self.model, &self.enc);
        self.cache
            .entry((prev, t))
            .or_insert_with(|| {
                let z = model.hidden_state(&enc[t * hidden..(t + 1) * hidden], prev);
                let mut logits = Vec::with_capacity(model.dims.vocab);
                model.join(&z, &mut logits);
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                logits.iter().map(|x| x - lse).collect()
            })
            .clone()
    }
}

/// Largest relative error between the analytic gradient of `join_w` and
/// central differences of the loss.
pub fn check_join_grad(model: &ToyModel, utt: &Utterance, kind: Topology, step: f64) -> Result<f64, LossError> {
    let (_, g) = model.loss_and_param_grad(utt, kind)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for j in 0..model.params.join_w.len() {
        let orig = probe.params.join_w[j];
        probe.params.join_w[j] = orig + step;
        let (up, _) = probe.loss_and_param_grad(utt, kind)?;
        probe.params.join_w[j] = orig - step;
        let (down, _) = probe.loss_and_param_grad(utt, kind)?;
        probe.params.join_w[j] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(crate::verify::relative_error(g.join_w[j], numeric));
    }
    Ok(worst)
}
