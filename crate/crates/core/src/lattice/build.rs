use super::{Edge, Label, Lattice, LatticeError, NodeKind, Topology, TopologySpec, BLANK};

/// Builds the lattice for `spec.kind`.
pub fn build(spec: &TopologySpec) -> Result<Lattice, LatticeError> {
    check_labels(spec)?;
    Ok(assemble(&spec.labels, spec.vocab_size, spec.kind))
}

/// CTC-like graph: labels may repeat over frames, blanks are optional except
/// between two equal consecutive labels.
pub fn build_ctc_like_graph(spec: &TopologySpec) -> Result<Lattice, LatticeError> {
    if spec.kind != Topology::CtcLike {
        return Err(LatticeError::InvalidSpec(format!(
            "expected a ctc-like spec, got {}",
            spec.kind
        )));
    }
    build(spec)
}

/// MonoRNN-T graph: each label is emitted exactly once, at most one label per
/// frame, blanks optional.
pub fn build_monornnt_graph(spec: &TopologySpec) -> Result<Lattice, LatticeError> {
    if spec.kind != Topology::MonoRnnt {
        return Err(LatticeError::InvalidSpec(format!(
            "expected a mono-rnnt spec, got {}",
            spec.kind
        )));
    }
    build(spec)
}

/// Shortest number of frames any path of the built lattice needs.
pub fn min_frames(kind: Topology, labels: &[Label]) -> usize {
    let repeats = match kind {
        Topology::CtcLike => labels.windows(2).filter(|w| w[0] == w[1]).count(),
        Topology::MonoRnnt => 0,
    };
    (labels.len() + repeats).max(1)
}

fn check_labels(spec: &TopologySpec) -> Result<(), LatticeError> {
    for (pos, &k) in spec.labels.iter().enumerate() {
        if k == BLANK {
            return Err(LatticeError::InvalidSpec(format!(
                "blank label found at position {pos}"
            )));
        }
        if k >= spec.vocab_size {
            return Err(LatticeError::InvalidSpec(format!(
                "label {k} at position {pos} is outside the vocabulary of size {}",
                spec.vocab_size
            )));
        }
    }
    Ok(())
}

// Emitting nodes are laid out as blank_0, y_1, blank_1, ..., y_U, blank_U.
fn blank_node(u: usize) -> usize {
    1 + 2 * u
}

fn label_node(u: usize) -> usize {
    2 * u
}

fn assemble(labels: &[Label], vocab_size: usize, kind: Topology) -> Lattice {
    let u_len = labels.len();
    let end = 2 * u_len + 2;

    let mut nodes = Vec::with_capacity(end + 1);
    nodes.push(NodeKind::Start);
    nodes.push(NodeKind::Blank);
    for &k in labels {
        nodes.push(NodeKind::Label(k));
        nodes.push(NodeKind::Blank);
    }
    nodes.push(NodeKind::End);

    let mut edges = Vec::new();
    let mut emit = |from: usize, to: usize, state: usize| {
        edges.push(Edge {
            from,
            to,
            log_weight: 0.0,
            state: Some(state),
        })
    };

    emit(0, blank_node(0), 0);
    if u_len > 0 {
        emit(0, label_node(1), 0);
    }

    // The decoder state of an edge is the number of labels consumed at its
    // source node, so every node's outgoing edges share one state.
    for u in 0..=u_len {
        if u > 0 {
            let y = label_node(u);
            if kind == Topology::CtcLike {
                emit(y, y, u);
            }
            emit(y, blank_node(u), u);
            if u < u_len {
                let skip = match kind {
                    Topology::CtcLike => labels[u - 1] != labels[u],
                    Topology::MonoRnnt => true,
                };
                if skip {
                    emit(y, label_node(u + 1), u);
                }
            }
        }
        let b = blank_node(u);
        emit(b, b, u);
        if u < u_len {
            emit(b, label_node(u + 1), u);
        }
    }

    for from in [label_node(u_len), blank_node(u_len)] {
        if from == 0 {
            continue;
        }
        edges.push(Edge {
            from,
            to: end,
            log_weight: 0.0,
            state: None,
        });
    }
    edges.sort_by_key(|e| e.from);

    Lattice::from_parts(nodes, edges, u_len + 1, vocab_size)
        .expect("builder produces in-range edges")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctc(labels: &[Label]) -> Lattice {
        build_ctc_like_graph(&TopologySpec::new(Topology::CtcLike, labels.to_vec(), 4)).unwrap()
    }

    fn mono(labels: &[Label]) -> Lattice {
        build_monornnt_graph(&TopologySpec::new(Topology::MonoRnnt, labels.to_vec(), 4)).unwrap()
    }

    fn has_edge(lat: &Lattice, from: usize, to: usize) -> bool {
        lat.edges().iter().any(|e| e.from == from && e.to == to)
    }

    #[test]
    fn ctc_distinct_labels_keep_skip_edge() {
        let lat = ctc(&[1, 2]);
        assert_eq!(lat.num_nodes(), 7);
        let emitting = lat.nodes().iter().filter(|n| n.emitted().is_some()).count();
        assert_eq!(emitting, 5);
        assert!(has_edge(&lat, label_node(1), label_node(2)));
        assert_eq!(lat.num_states(), 3);
    }

    #[test]
    fn ctc_equal_labels_force_blank() {
        let lat = ctc(&[1, 1]);
        assert!(!has_edge(&lat, label_node(1), label_node(2)));
        assert!(has_edge(&lat, label_node(1), blank_node(1)));
        assert!(has_edge(&lat, blank_node(1), label_node(2)));
    }

    #[test]
    fn empty_labels_give_blank_only_lattice() {
        for lat in [ctc(&[]), mono(&[])] {
            assert_eq!(lat.nodes(), &[NodeKind::Start, NodeKind::Blank, NodeKind::End]);
            assert!(has_edge(&lat, 0, 1));
            assert!(has_edge(&lat, 1, 1));
            assert!(has_edge(&lat, 1, 2));
            assert_eq!(lat.edges().len(), 3);
        }
        assert_eq!(ctc(&[]), mono(&[]));
    }

    #[test]
    fn mono_has_no_label_self_loops() {
        let lat = mono(&[1]);
        assert!(!has_edge(&lat, label_node(1), label_node(1)));
        assert!(has_edge(&lat, blank_node(0), blank_node(0)));
        assert!(has_edge(&lat, blank_node(1), blank_node(1)));
    }

    #[test]
    fn mono_equal_labels_keep_skip_edge() {
        assert!(has_edge(&mono(&[2, 2]), label_node(1), label_node(2)));
        assert!(!has_edge(&ctc(&[2, 2]), label_node(1), label_node(2)));
    }

    #[test]
    fn states_count_consumed_labels() {
        let lat = ctc(&[1, 2, 3]);
        for e in lat.edges() {
            let expected = match lat.kind(e.from) {
                NodeKind::Start => Some(0),
                _ if e.to == lat.end() => None,
                _ => Some(e.from / 2),
            };
            assert_eq!(e.state, expected, "edge {e:?}");
        }
    }

    #[test]
    fn blank_in_labels_is_rejected() {
        let err = build(&TopologySpec::new(Topology::CtcLike, vec![1, 0], 3)).unwrap_err();
        assert!(matches!(err, LatticeError::InvalidSpec(_)));
        let err = build(&TopologySpec::new(Topology::MonoRnnt, vec![5], 3)).unwrap_err();
        assert!(matches!(err, LatticeError::InvalidSpec(_)));
    }

    #[test]
    fn wrong_kind_for_builder_is_rejected() {
        let spec = TopologySpec::new(Topology::MonoRnnt, vec![1], 3);
        assert!(build_ctc_like_graph(&spec).is_err());
    }

    #[test]
    fn min_frames_counts_forced_blanks() {
        assert_eq!(min_frames(Topology::CtcLike, &[1, 1, 2, 2]), 6);
        assert_eq!(min_frames(Topology::MonoRnnt, &[1, 1, 2, 2]), 4);
        assert_eq!(min_frames(Topology::CtcLike, &[]), 1);
    }
}
