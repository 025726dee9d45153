use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::{Lattice, NodeKind};

/// A single well-formedness breach found by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Node 0 must be the only start node.
    StartNode { node: usize },
    /// The last node must be the only end node.
    EndNode { node: usize },
    /// Two outgoing edges of `node` lead to nodes emitting `label`.
    Nondeterministic { node: usize, label: usize },
    /// Outgoing emitting edges of `node` use more than one decoder state.
    MixedStates { node: usize, states: Vec<usize> },
    /// `node` is closer to start than a node with a smaller id.
    NotBreadthFirst { node: usize, depth: usize, previous_depth: usize },
    Unreachable { node: usize },
    DeadEnd { node: usize },
    /// An edge into the end node carries a decoder state.
    EmittingEndEdge { edge: usize },
    /// An edge into an emitting node has no decoder state.
    MissingState { edge: usize },
    StateOutOfRange { edge: usize, state: usize },
    LabelOutOfRange { node: usize, label: usize },
    /// Edges may not enter start or leave end.
    MisplacedEdge { edge: usize },
    InvalidWeight { edge: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StartNode { node } => write!(f, "node {node}: misplaced or missing start node"),
            Violation::EndNode { node } => write!(f, "node {node}: misplaced or missing end node"),
            Violation::Nondeterministic { node, label } => {
                write!(f, "node {node}: several outgoing edges emit label {label}")
            }
            Violation::MixedStates { node, states } => {
                write!(f, "node {node}: outgoing edges use decoder states {states:?}")
            }
            Violation::NotBreadthFirst {
                node,
                depth,
                previous_depth,
            } => write!(
                f,
                "node {node}: depth {depth} follows a node of depth {previous_depth}"
            ),
            Violation::Unreachable { node } => write!(f, "node {node}: unreachable from start"),
            Violation::DeadEnd { node } => write!(f, "node {node}: cannot reach end"),
            Violation::EmittingEndEdge { edge } => {
                write!(f, "edge {edge}: edge into end carries a decoder state")
            }
            Violation::MissingState { edge } => {
                write!(f, "edge {edge}: emitting edge without decoder state")
            }
            Violation::StateOutOfRange { edge, state } => {
                write!(f, "edge {edge}: decoder state {state} out of range")
            }
            Violation::LabelOutOfRange { node, label } => {
                write!(f, "node {node}: label {label} outside vocabulary")
            }
            Violation::MisplacedEdge { edge } => {
                write!(f, "edge {edge}: enters start or leaves end")
            }
            Violation::InvalidWeight { edge } => write!(f, "edge {edge}: invalid weight"),
        }
    }
}

/// Collects every well-formedness violation. An empty result means the
/// lattice is safe to train on.
pub fn validate(lat: &Lattice) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = lat.num_nodes();
    let end = lat.end();

    for (id, kind) in lat.nodes().iter().enumerate() {
        match kind {
            NodeKind::Start if id != 0 => out.push(Violation::StartNode { node: id }),
            NodeKind::End if id != end => out.push(Violation::EndNode { node: id }),
            NodeKind::Label(k) if *k == 0 || *k >= lat.vocab_size() => {
                out.push(Violation::LabelOutOfRange { node: id, label: *k })
            }
            _ => {}
        }
    }
    if lat.kind(0) != NodeKind::Start {
        out.push(Violation::StartNode { node: 0 });
    }
    if lat.kind(end) != NodeKind::End {
        out.push(Violation::EndNode { node: end });
    }

    for (idx, e) in lat.edges().iter().enumerate() {
        if !e.log_weight.is_finite() {
            out.push(Violation::InvalidWeight { edge: idx });
        }
        if e.to == 0 || e.from == end {
            out.push(Violation::MisplacedEdge { edge: idx });
            continue;
        }
        match (lat.kind(e.to), e.state) {
            (NodeKind::End, Some(_)) => out.push(Violation::EmittingEndEdge { edge: idx }),
            (NodeKind::End, None) => {}
            (_, None) => out.push(Violation::MissingState { edge: idx }),
            (_, Some(s)) if s >= lat.num_states() => {
                out.push(Violation::StateOutOfRange { edge: idx, state: s })
            }
            _ => {}
        }
    }

    for node in 0..n {
        let mut by_label: BTreeMap<usize, usize> = BTreeMap::new();
        let mut states = BTreeSet::new();
        for &idx in lat.outgoing(node) {
            let e = lat.edge(idx);
            if let Some(label) = lat.kind(e.to).emitted() {
                *by_label.entry(label).or_default() += 1;
                if let Some(s) = e.state {
                    states.insert(s);
                }
            }
        }
        for (label, count) in by_label {
            if count > 1 {
                out.push(Violation::Nondeterministic { node, label });
            }
        }
        if states.len() > 1 {
            out.push(Violation::MixedStates {
                node,
                states: states.into_iter().collect(),
            });
        }
    }

    let depth = bfs(n, 0, |g| lat.outgoing(g).iter().map(|&e| lat.edge(e).to));
    let to_end = bfs(n, end, |g| lat.incoming(g).iter().map(|&e| lat.edge(e).from));
    let mut previous_depth = 0;
    for node in 0..n {
        match depth[node] {
            None => out.push(Violation::Unreachable { node }),
            // End may sit closer to start than the last emitting nodes.
            Some(d) if node != end => {
                if d < previous_depth {
                    out.push(Violation::NotBreadthFirst {
                        node,
                        depth: d,
                        previous_depth,
                    });
                }
                previous_depth = previous_depth.max(d);
            }
            Some(_) => {}
        }
        if to_end[node].is_none() {
            out.push(Violation::DeadEnd { node });
        }
    }

    out
}

fn bfs<I>(n: usize, source: usize, next: impl Fn(usize) -> I) -> Vec<Option<usize>>
where
    I: Iterator<Item = usize>,
{
    let mut depth = vec![None; n];
    depth[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(g) = queue.pop_front() {
        let d = depth[g].unwrap();
        for h in next(g) {
            if depth[h].is_none() {
                depth[h] = Some(d + 1);
                queue.push_back(h);
            }
        }
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build, Edge, Topology, TopologySpec};

    fn edge(from: usize, to: usize, state: Option<usize>) -> Edge {
        Edge {
            from,
            to,
            log_weight: 0.0,
            state,
        }
    }

    #[test]
    fn builder_output_is_well_formed() {
        for kind in Topology::ALL {
            for labels in [vec![], vec![1], vec![1, 1], vec![1, 2, 1], vec![2, 2, 2, 1]] {
                let lat = build(&TopologySpec::new(kind, labels.clone(), 3)).unwrap();
                assert_eq!(validate(&lat), vec![], "{kind} {labels:?}");
            }
        }
    }

    #[test]
    fn duplicate_label_targets_are_nondeterministic() {
        let nodes = vec![
            NodeKind::Start,
            NodeKind::Label(1),
            NodeKind::Label(1),
            NodeKind::End,
        ];
        let edges = vec![
            edge(0, 1, Some(0)),
            edge(0, 2, Some(0)),
            edge(1, 3, None),
            edge(2, 3, None),
        ];
        let lat = Lattice::from_parts(nodes, edges, 1, 2).unwrap();
        assert_eq!(
            validate(&lat),
            vec![Violation::Nondeterministic { node: 0, label: 1 }]
        );
    }

    #[test]
    fn mixed_states_are_reported() {
        let nodes = vec![
            NodeKind::Start,
            NodeKind::Blank,
            NodeKind::Label(1),
            NodeKind::End,
        ];
        let edges = vec![
            edge(0, 1, Some(0)),
            edge(0, 2, Some(1)),
            edge(1, 3, None),
            edge(2, 3, None),
        ];
        let lat = Lattice::from_parts(nodes, edges, 2, 2).unwrap();
        assert_eq!(
            validate(&lat),
            vec![Violation::MixedStates {
                node: 0,
                states: vec![0, 1]
            }]
        );
    }

    #[test]
    fn end_edges_must_not_emit() {
        let nodes = vec![NodeKind::Start, NodeKind::Blank, NodeKind::End];
        let edges = vec![edge(0, 1, Some(0)), edge(1, 2, Some(0))];
        let lat = Lattice::from_parts(nodes, edges, 1, 2).unwrap();
        assert_eq!(validate(&lat), vec![Violation::EmittingEndEdge { edge: 1 }]);
    }

    #[test]
    fn reachability_and_order_are_checked() {
        // Node 2 is reachable only through node 3, so ids are not breadth-first,
        // and node 4 is an orphan that cannot reach end.
        let nodes = vec![
            NodeKind::Start,
            NodeKind::Blank,
            NodeKind::Label(1),
            NodeKind::Label(2),
            NodeKind::Label(1),
            NodeKind::End,
        ];
        let edges = vec![
            edge(0, 1, Some(0)),
            edge(1, 3, Some(0)),
            edge(3, 2, Some(1)),
            edge(2, 5, None),
        ];
        let lat = Lattice::from_parts(nodes, edges, 2, 3).unwrap();
        let v = validate(&lat);
        assert!(v.contains(&Violation::NotBreadthFirst {
            node: 3,
            depth: 2,
            previous_depth: 3
        }));
        assert!(v.contains(&Violation::Unreachable { node: 4 }));
        assert!(v.contains(&Violation::DeadEnd { node: 4 }));
    }

    #[test]
    fn missing_state_and_range_errors() {
        let nodes = vec![NodeKind::Start, NodeKind::Label(7), NodeKind::End];
        let edges = vec![edge(0, 1, None), edge(1, 1, Some(3)), edge(1, 2, None)];
        let lat = Lattice::from_parts(nodes, edges, 1, 3).unwrap();
        let v = validate(&lat);
        assert!(v.contains(&Violation::MissingState { edge: 0 }));
        assert!(v.contains(&Violation::StateOutOfRange { edge: 1, state: 3 }));
        assert!(v.contains(&Violation::LabelOutOfRange { node: 1, label: 7 }));
    }
}
