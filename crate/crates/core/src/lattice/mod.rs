//! Training lattices.
//!
//! A [`Lattice`] is a directed emission graph. Node `0` is the non-emitting
//! start node, node `G + 1` the non-emitting end node, and every node in
//! between emits either blank or an ASR label whenever a path enters it.
//! Edges carry a log-weight and, unless they lead into the end node, the
//! index of the decoder state whose output distribution scores the emission.

mod build;
mod json;
mod validate;

pub use build::{build, build_ctc_like_graph, build_monornnt_graph, min_frames};
pub use json::{deserialize, serialize};
pub use validate::{validate, Violation};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Output symbol index. Blank is always `0`.
pub type Label = usize;

/// The blank label.
pub const BLANK: Label = 0;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("invalid topology spec: {0}")]
    InvalidSpec(String),
    #[error("invalid lattice: {0}")]
    Structure(String),
    #[error("lattice is not well-formed: {}", fmt_violations(.0))]
    Malformed(Vec<Violation>),
    #[error("parse error at {position}: {message}")]
    Parse { position: String, message: String },
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// What a node emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Start,
    End,
    Blank,
    Label(Label),
}

impl NodeKind {
    /// The emitted label, or `None` for start/end.
    pub fn emitted(self) -> Option<Label> {
        match self {
            NodeKind::Blank => Some(BLANK),
            NodeKind::Label(k) => Some(k),
            NodeKind::Start | NodeKind::End => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub log_weight: f64,
    /// Decoder state scoring the emission at `to`; `None` on edges into end.
    pub state: Option<usize>,
}

/// Topology family of the built-in graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Topology {
    CtcLike,
    MonoRnnt,
}

impl Topology {
    pub const ALL: [Topology; 2] = [Topology::CtcLike, Topology::MonoRnnt];

    pub fn name(self) -> &'static str {
        match self {
            Topology::CtcLike => "ctc-like",
            Topology::MonoRnnt => "mono-rnnt",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ctc-like" | "ctc" => Ok(Topology::CtcLike),
            "mono-rnnt" | "monornnt" => Ok(Topology::MonoRnnt),
            other => Err(format!("unknown topology '{other}' (expected ctc-like or mono-rnnt)")),
        }
    }
}

/// Input to the graph builders: a topology and a blank-free label sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopologySpec {
    pub kind: Topology,
    pub labels: Vec<Label>,
    /// Vocabulary size including blank.
    pub vocab_size: usize,
}

impl TopologySpec {
    pub fn new(kind: Topology, labels: Vec<Label>, vocab_size: usize) -> Self {
        Self {
            kind,
            labels,
            vocab_size,
        }
    }
}

/// Directed emission graph with forward and reverse adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    nodes: Vec<NodeKind>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    num_states: usize,
    vocab_size: usize,
}

impl Lattice {
    /// Assembles a lattice from raw parts.
    ///
    /// Only referential integrity is checked here (edge endpoints exist);
    /// well-formedness is the job of [`validate`].
    pub fn from_parts(
        nodes: Vec<NodeKind>,
        edges: Vec<Edge>,
        num_states: usize,
        vocab_size: usize,
    ) -> Result<Self, LatticeError> {
        let n = nodes.len();
        if n < 2 {
            return Err(LatticeError::Structure(format!(
                "a lattice needs at least a start and an end node, got {n} nodes"
            )));
        }
        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(LatticeError::Structure(format!(
                    "edge {idx} ({} -> {}) references a node outside 0..{n}",
                    e.from, e.to
                )));
            }
            outgoing[e.from].push(idx);
            incoming[e.to].push(idx);
        }
        Ok(Self {
            nodes,
            edges,
            outgoing,
            incoming,
            num_states,
            vocab_size,
        })
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn end(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.nodes[node]
    }

    /// Indices into [`Lattice::edges`] of the edges leaving `node`.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    /// Indices into [`Lattice::edges`] of the edges entering `node`.
    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    /// Graphviz rendering. Edge labels show the decoder state, and the
    /// weight when it differs from one.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lattice {\n  rankdir=LR;\n");
        for (id, kind) in self.nodes.iter().enumerate() {
            let (label, shape) = match kind {
                NodeKind::Start => ("start".to_string(), "point"),
                NodeKind::End => ("end".to_string(), "doublecircle"),
                NodeKind::Blank => ("&#8709;".to_string(), "circle"),
                NodeKind::Label(k) => (k.to_string(), "circle"),
            };
            out.push_str(&format!(
                "  n{id} [label=\"{label}\", shape={shape}, xlabel=\"{id}\"];\n"
            ));
        }
        for e in &self.edges {
            let mut label = match e.state {
                Some(i) => format!("i={i}"),
                None => String::new(),
            };
            if e.log_weight != 0.0 {
                if !label.is_empty() {
                    label.push(' ');
                }
                label.push_str(&format!("w={:.4}", e.log_weight.exp()));
            }
            out.push_str(&format!("  n{} -> n{} [label=\"{label}\"];\n", e.from, e.to));
        }
        out.push_str("}\n");
        out
    }
}
