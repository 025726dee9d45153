//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes plain numbers and strings and returns a JSON string, so
//! the page needs no bundler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use gtct::decode::{beam_search, greedy_search, DecodeConfig, TensorProvider, UniformLm};
use gtct::lattice::{build, serialize, NodeKind};
use gtct::loss::node_occupancy;
use gtct::{loss_and_grad, Label, PosteriorTensor, Topology, TopologySpec};

fn parse_labels(text: &str) -> Result<Vec<Label>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("invalid label '{s}'")))
        .collect()
}

fn random_posteriors(seed: u64, frames: usize, states: usize, vocab: usize, sharpness: f64) -> PosteriorTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = (0..frames * states * vocab)
        .map(|_| sharpness * rng.gen_range(-1.0..1.0))
        .collect();
    PosteriorTensor::from_logits(frames, states, vocab, logits).expect("positive dimensions")
}

fn node_name(kind: NodeKind) -> String {
    match kind {
        NodeKind::Start => "start".into(),
        NodeKind::End => "end".into(),
        NodeKind::Blank => "∅".into(),
        NodeKind::Label(k) => k.to_string(),
    }
}

/// Lattice for `labels` as JSON or, with `format == "dot"`, Graphviz DOT.
pub fn lattice_text(topology: &str, labels: &str, vocab: usize, format: &str) -> Result<String, String> {
    let kind: Topology = topology.parse()?;
    let lat = build(&TopologySpec::new(kind, parse_labels(labels)?, vocab)).map_err(|e| e.to_string())?;
    match format {
        "dot" => Ok(lat.to_dot()),
        _ => serialize(&lat).map_err(|e| e.to_string()),
    }
}

#[derive(Serialize)]
struct Occupancy {
    nodes: Vec<String>,
    frames: usize,
    loss: f64,
    /// `occupancy[t][g]`
    occupancy: Vec<Vec<f64>>,
}

/// Per-frame node occupancy under seeded random posteriors.
pub fn occupancy_json(
    topology: &str,
    labels: &str,
    vocab: usize,
    frames: usize,
    seed: u64,
    sharpness: f64,
) -> Result<String, String> {
    let kind: Topology = topology.parse()?;
    if frames == 0 {
        return Err("need at least one frame".into());
    }
    let lat = build(&TopologySpec::new(kind, parse_labels(labels)?, vocab)).map_err(|e| e.to_string())?;
    let post = random_posteriors(seed, frames, lat.num_states(), vocab, sharpness);
    let res = loss_and_grad(&lat, &post).map_err(|e| e.to_string())?;
    let occ = node_occupancy(&lat, &post).map_err(|e| e.to_string())?;
    let out = Occupancy {
        nodes: lat.nodes().iter().map(|&k| node_name(k)).collect(),
        frames,
        loss: res.loss,
        occupancy: occ.chunks(lat.num_nodes()).map(<[f64]>::to_vec).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Hypothesis {
    prefix: Vec<Label>,
    score: f64,
}

#[derive(Serialize)]
struct DecodeOut {
    greedy: Vec<Label>,
    greedy_frames: Vec<Label>,
    greedy_score: f64,
    beam: Vec<Label>,
    beam_score: f64,
    hypotheses: Vec<Hypothesis>,
    /// `state0[t][k]`: posteriors of the empty-prefix state, for display.
    state0: Vec<Vec<f64>>,
}

/// Greedy and prefix beam search on seeded random posteriors.
pub fn decode_json(
    seed: u64,
    frames: usize,
    vocab: usize,
    beam: usize,
    theta1: f64,
    theta2: f64,
    sharpness: f64,
) -> Result<String, String> {
    if frames == 0 || vocab < 2 {
        return Err("need at least one frame and one label".into());
    }
    let post = random_posteriors(seed, frames, frames + 1, vocab, sharpness);
    let cfg = DecodeConfig {
        theta1,
        theta2,
        beam,
        ..DecodeConfig::default()
    };
    let greedy = greedy_search(&mut TensorProvider::new(&post), Topology::CtcLike);
    let out = beam_search(&mut TensorProvider::new(&post), &cfg, &UniformLm).map_err(|e| e.to_string())?;
    let result = DecodeOut {
        greedy: greedy.labels,
        greedy_frames: greedy.frame_labels,
        greedy_score: greedy.log_score,
        beam: out.prefix,
        beam_score: out.score,
        hypotheses: out
            .beam
            .into_iter()
            .map(|(h, score)| Hypothesis { prefix: h.prefix, score })
            .collect(),
        state0: (0..frames)
            .map(|t| post.log_probs_row(t, 0).iter().map(|x| x.exp()).collect())
            .collect(),
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn lattice(topology: &str, labels: &str, vocab: usize, format: &str) -> Result<String, JsValue> {
    lattice_text(topology, labels, vocab, format).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn occupancy(
    topology: &str,
    labels: &str,
    vocab: usize,
    frames: usize,
    seed: u32,
    sharpness: f64,
) -> Result<String, JsValue> {
    occupancy_json(topology, labels, vocab, frames, u64::from(seed), sharpness).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn decode(
    seed: u32,
    frames: usize,
    vocab: usize,
    beam: usize,
    theta1: f64,
    theta2: f64,
    sharpness: f64,
) -> Result<String, JsValue> {
    decode_json(u64::from(seed), frames, vocab, beam, theta1, theta2, sharpness).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_formats() {
        let json = lattice_text("ctc-like", "1,2", 3, "json").unwrap();
        assert!(json.contains("\"nodes\""));
        assert!(lattice_text("mono-rnnt", "1 1", 2, "dot").unwrap().starts_with("digraph"));
        assert!(lattice_text("ctc", "1,x", 3, "json").is_err());
        assert!(lattice_text("other", "1", 3, "json").is_err());
    }

    #[test]
    fn occupancy_rows_are_distributions() {
        let text = occupancy_json("ctc-like", "1,2", 3, 5, 4, 2.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let rows = v["occupancy"].as_array().unwrap();
        assert_eq!(rows.len(), 5);
        for row in rows {
            let s: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(occupancy_json("ctc-like", "1,1,1", 3, 2, 4, 2.0).is_err());
    }

    #[test]
    fn decode_reports_both_searches() {
        let text = decode_json(1, 4, 3, 8, 0.0, f64::INFINITY, 3.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["greedy_frames"].as_array().unwrap().len(), 4);
        assert!(!v["hypotheses"].as_array().unwrap().is_empty());
        assert!(decode_json(1, 4, 3, 0, 0.0, 1.0, 3.0).is_err());
    }
}
