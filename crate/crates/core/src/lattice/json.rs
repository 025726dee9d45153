//! JSON graph format.
//!
//! ```text
//! {"vocab": 3, "states": 2,
//!  "nodes": [{"id": 0, "label": "start"}, {"id": 1, "label": "blank"}, {"id": 2, "label": 1}, ...],
//!  "edges": [{"from": 0, "to": 1, "logw": 0.0, "state": 0}, ..., {"from": 3, "to": 4, "logw": 0.0, "state": null}]}
//! ```
//!
//! Integer label `0` is accepted as an alias for `"blank"`.

use serde::{Deserialize, Serialize};

use super::{validate, Edge, Lattice, LatticeError, NodeKind};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    vocab: usize,
    states: usize,
    nodes: Vec<RawNode>,
    edges: Vec<RawEdge>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: usize,
    label: RawLabel,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Id(usize),
    Name(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: usize,
    to: usize,
    logw: f64,
    state: Option<usize>,
}

fn parse_err(position: impl Into<String>, message: impl Into<String>) -> LatticeError {
    LatticeError::Parse {
        position: position.into(),
        message: message.into(),
    }
}

/// Serializes a well-formed lattice. Malformed lattices are refused.
pub fn serialize(lat: &Lattice) -> Result<String, LatticeError> {
    let violations = validate(lat);
    if !violations.is_empty() {
        return Err(LatticeError::Malformed(violations));
    }
    let raw = RawGraph {
        vocab: lat.vocab_size(),
        states: lat.num_states(),
        nodes: lat
            .nodes()
            .iter()
            .enumerate()
            .map(|(id, kind)| RawNode {
                id,
                label: match kind {
                    NodeKind::Start => RawLabel::Name("start".into()),
                    NodeKind::End => RawLabel::Name("end".into()),
                    NodeKind::Blank => RawLabel::Name("blank".into()),
                    NodeKind::Label(k) => RawLabel::Id(*k),
                },
            })
            .collect(),
        edges: lat
            .edges()
            .iter()
            .map(|e| RawEdge {
                from: e.from,
                to: e.to,
                logw: e.log_weight,
                state: e.state,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&raw).expect("graph serializes"))
}

/// Parses the JSON graph format.
///
/// Syntax errors report line and column; schema errors report the offending
/// field path (e.g. `edges[3].to`). The result is structurally sound but not
/// validated; call [`validate`] before training on it.
pub fn deserialize(text: &str) -> Result<Lattice, LatticeError> {
    let raw: RawGraph = serde_json::from_str(text).map_err(|e| {
        parse_err(
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;

    let n = raw.nodes.len();
    let mut kinds: Vec<Option<NodeKind>> = vec![None; n];
    for (pos, node) in raw.nodes.iter().enumerate() {
        let at = format!("nodes[{pos}].id");
        if node.id >= n {
            return Err(parse_err(at, format!("node id {} outside 0..{n}", node.id)));
        }
        if kinds[node.id].is_some() {
            return Err(parse_err(at, format!("duplicate node id {}", node.id)));
        }
        let kind = match &node.label {
            RawLabel::Id(0) => NodeKind::Blank,
            RawLabel::Id(k) => NodeKind::Label(*k),
            RawLabel::Name(s) => match s.as_str() {
                "blank" => NodeKind::Blank,
                "start" => NodeKind::Start,
                "end" => NodeKind::End,
                other => {
                    return Err(parse_err(
                        format!("nodes[{pos}].label"),
                        format!("unknown label '{other}'"),
                    ))
                }
            },
        };
        kinds[node.id] = Some(kind);
    }
    let nodes: Vec<NodeKind> = kinds.into_iter().map(|k| k.expect("ids are a permutation")).collect();

    let starts: Vec<usize> = positions(&nodes, NodeKind::Start);
    let ends: Vec<usize> = positions(&nodes, NodeKind::End);
    if starts != [0] {
        return Err(parse_err(
            "nodes",
            format!("expected exactly one start node with id 0, found {starts:?}"),
        ));
    }
    if ends.len() != 1 || ends[0] != n - 1 {
        return Err(parse_err(
            "nodes",
            format!("expected exactly one end node with id {}, found {ends:?}", n.saturating_sub(1)),
        ));
    }

    let mut edges = Vec::with_capacity(raw.edges.len());
    for (pos, e) in raw.edges.iter().enumerate() {
        for (field, id) in [("from", e.from), ("to", e.to)] {
            if id >= n {
                return Err(parse_err(
                    format!("edges[{pos}].{field}"),
                    format!("unknown node id {id}"),
                ));
            }
        }
        edges.push(Edge {
            from: e.from,
            to: e.to,
            log_weight: e.logw,
            state: e.state,
        });
    }

    for (id, kind) in nodes.iter().enumerate() {
        if let NodeKind::Label(k) = kind {
            if *k >= raw.vocab {
                return Err(parse_err(
                    format!("nodes[{id}].label"),
                    format!("label {k} outside vocabulary of size {}", raw.vocab),
                ));
            }
        }
    }
    Lattice::from_parts(nodes, edges, raw.states, raw.vocab)
}

fn positions(nodes: &[NodeKind], want: NodeKind) -> Vec<usize> {
    nodes
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == want)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build, Topology, TopologySpec};

    #[test]
    fn round_trip_is_identity() {
        let lat = build(&TopologySpec::new(Topology::CtcLike, vec![1, 2], 3)).unwrap();
        let text = serialize(&lat).unwrap();
        assert_eq!(deserialize(&text).unwrap(), lat);
    }

    #[test]
    fn missing_end_node_is_a_parse_error() {
        let text = r#"{"vocab": 2, "states": 1,
            "nodes": [{"id": 0, "label": "start"}, {"id": 1, "label": "blank"}],
            "edges": [{"from": 0, "to": 1, "logw": 0.0, "state": 0}]}"#;
        let err = deserialize(text).unwrap_err();
        assert!(matches!(&err, LatticeError::Parse { position, .. } if position == "nodes"), "{err}");
        assert!(err.to_string().contains("end node"));
    }

    #[test]
    fn unknown_node_id_is_named() {
        let text = r#"{"vocab": 2, "states": 1,
            "nodes": [{"id": 0, "label": "start"}, {"id": 1, "label": 0}, {"id": 2, "label": "end"}],
            "edges": [{"from": 0, "to": 1, "logw": 0.0, "state": 0},
                      {"from": 1, "to": 17, "logw": 0.0, "state": null}]}"#;
        let err = deserialize(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("edges[1].to") && msg.contains("17"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = deserialize("{\"vocab\": 2,\n  \"states\": }").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn malformed_lattice_is_not_serialized() {
        let nodes = vec![NodeKind::Start, NodeKind::Blank, NodeKind::End];
        let edges = vec![Edge {
            from: 0,
            to: 1,
            log_weight: 0.0,
            state: Some(0),
        }];
        let lat = Lattice::from_parts(nodes, edges, 1, 2).unwrap();
        assert!(matches!(serialize(&lat), Err(LatticeError::Malformed(_))));
    }
}
