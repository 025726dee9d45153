use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gtct::lattice::{build, deserialize, serialize, validate, NodeKind};
use gtct::tensor::RawTensor;
use gtct::{loss_and_grad, PosteriorTensor, Topology, TopologySpec};

fn gtct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtct"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn field(text: &str, key: &str) -> f64 {
    let start = text.find(&format!("{key}=")).unwrap_or_else(|| panic!("{key} missing in {text}")) + key.len() + 1;
    let rest = &text[start..];
    let end = rest.find(|c: char| c.is_whitespace()).unwrap_or(rest.len());
    rest[..end].parse().unwrap()
}

#[test]
fn check_grad_passes_and_catches_a_sign_flip() {
    let out = gtct(&["check-grad"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS max_rel_err="));

    let out = gtct(&["check-grad", "--topology", "mono-rnnt", "--seed", "99"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("topologies=mono-rnnt"));

    let out = gtct(&["check-grad", "--mutate", "flip-sign", "--cases", "20"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn check_oracle_laws() {
    let out = gtct(&["check-oracle"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).matches("PASS").count(), 5);

    let out = gtct(&["check-oracle", "--cases", "1000", "--max-t", "6"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let out = gtct(&["check-oracle", "--max-t", "1", "--max-u", "3"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible length"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&gtct(&["check-grad", "--bogus"])), 2);
    assert_eq!(code(&gtct(&["check-oracle", "--max-t", "20"])), 2);
    assert_eq!(code(&gtct(&["decode", "--checkpoint", "x", "--beam", "0"])), 2);
    assert_eq!(code(&gtct(&["decode", "--tensor", "x", "--theta1", "1.5"])), 2);
    assert_eq!(code(&gtct(&["dump-graph", "--labels", "1,x"])), 2);
    assert_eq!(code(&gtct(&["dump-graph", "--labels", "0"])), 2);
    assert_eq!(code(&gtct(&["train-toy", "--resume", "x", "--lr", "0.1"])), 2);
}

#[test]
fn reports_are_deterministic() {
    let a = gtct(&["check-grad", "--seed", "5", "--cases", "50"]);
    let b = gtct(&["check-grad", "--seed", "5", "--cases", "50"]);
    assert_eq!(a.stdout, b.stdout);
    let c = gtct(&["check-oracle", "--seed", "5", "--cases", "50"]);
    let d = gtct(&["check-oracle", "--seed", "5", "--cases", "50"]);
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn dump_graph_json_and_dot() {
    let out = gtct(&["dump-graph", "--labels", "1,2"]);
    assert_eq!(code(&out), 0);
    let lat = deserialize(&stdout(&out)).unwrap();
    assert_eq!(lat.num_nodes(), 7);
    assert!(validate(&lat).is_empty());

    let out = gtct(&["dump-graph", "--labels", "1 2", "--dot"]);
    let dot = stdout(&out);
    assert!(dot.starts_with("digraph lattice {"));
    assert!(dot.trim_end().ends_with('}'));
    assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    for line in dot.lines().skip(1).filter(|l| l.trim() != "}") {
        assert!(line.trim_end().ends_with(';'), "{line}");
    }
}

#[test]
fn repeated_labels_differ_by_topology() {
    let ctc = deserialize(&stdout(&gtct(&["dump-graph", "--labels", "1,1"]))).unwrap();
    let mono = deserialize(&stdout(&gtct(&["dump-graph", "--labels", "1,1", "--topology", "mono-rnnt"]))).unwrap();
    let pairs = |l: &gtct::Lattice| -> Vec<(usize, usize)> {
        let mut v: Vec<_> = l.edges().iter().map(|e| (e.from, e.to)).collect();
        v.sort();
        v
    };
    let (c, m) = (pairs(&ctc), pairs(&mono));
    let only_ctc: Vec<_> = c.iter().filter(|e| !m.contains(e)).copied().collect();
    let only_mono: Vec<_> = m.iter().filter(|e| !c.contains(e)).copied().collect();
    // y1 = node 2, y2 = node 4.
    assert_eq!(only_ctc, vec![(2, 2), (4, 4)]);
    assert_eq!(only_mono, vec![(2, 4)]);
    for &(n, _) in &only_ctc {
        assert!(matches!(ctc.kind(n), NodeKind::Label(1)));
    }
}

fn train(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["train-toy", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = gtct(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
}

#[test]
fn train_toy_converges_for_both_topologies() {
    let tmp = tempfile::tempdir().unwrap();
    for topology in ["ctc-like", "mono-rnnt"] {
        let dir = tmp.path().join(topology);
        let report = train(&dir, &["--topology", topology, "--seed", "7", "--steps", "500"]);
        assert!(field(&report, "ratio") <= 0.1, "{report}");
        assert!(field(&report, "greedy_exact_match") >= 0.95, "{report}");
        let curve = fs::read_to_string(dir.join("loss.tsv")).unwrap();
        assert_eq!(curve.lines().count(), 502);
    }
}

#[test]
fn resume_continues_the_same_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let half = tmp.path().join("half");
    let rest = tmp.path().join("rest");
    train(&full, &["--steps", "40"]);
    train(&half, &["--steps", "20"]);
    let resumed = train(
        &rest,
        &["--resume", half.join("checkpoint.gtct").to_str().unwrap(), "--steps", "20"],
    );
    let curve = fs::read_to_string(full.join("loss.tsv")).unwrap();
    let at_20: f64 = curve.lines().nth(21).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((field(&resumed, "start_loss") - at_20).abs() < 1e-9);
    assert_eq!(
        fs::read(full.join("checkpoint.gtct")).unwrap(),
        fs::read(rest.join("checkpoint.gtct")).unwrap()
    );
}

#[test]
fn decode_trained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    train(tmp.path(), &["--seed", "7"]);
    let ckpt = tmp.path().join("checkpoint.gtct");
    let ckpt = ckpt.to_str().unwrap();
    let out = gtct(&["decode", "--checkpoint", ckpt, "--beam", "10"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let greedy = text.lines().find(|l| l.starts_with("greedy exact_match")).unwrap();
    assert!(field(greedy, "exact_match") >= 0.95);
    assert!(text.contains("beam_logp>=greedy_logp on 20/20"), "{text}");

    // Zero LM weight and bonus reproduce the LM-free output.
    let counts = tmp.path().join("counts.tsv");
    fs::write(&counts, "<s>\t1\t5\n1\t2\t3\n\t4\t2\n").unwrap();
    let plain = gtct(&["decode", "--checkpoint", ckpt]);
    let fused = gtct(&[
        "decode", "--checkpoint", ckpt, "--lm-counts", counts.to_str().unwrap(), "--lm-weight", "0",
        "--insertion-bonus", "0",
    ]);
    let body = |o: &Output| stdout(o).lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&plain), body(&fused));

    let weighted = gtct(&["decode", "--checkpoint", ckpt, "--lm-counts", counts.to_str().unwrap(), "--lm-weight", "0.5"]);
    assert_eq!(code(&weighted), 0);
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.gtct");
    assert_eq!(code(&gtct(&["decode", "--checkpoint", missing.to_str().unwrap()])), 3);
    let junk = tmp.path().join("junk.gtct");
    fs::write(&junk, b"not a tensor").unwrap();
    assert_eq!(code(&gtct(&["decode", "--tensor", junk.to_str().unwrap()])), 3);
    let counts = tmp.path().join("bad.tsv");
    fs::write(&counts, "<s>\t0\t5\n").unwrap();
    let post = tmp.path().join("post.gtct");
    let t = PosteriorTensor::from_logits(2, 3, 3, vec![0.0; 18]).unwrap();
    fs::write(&post, t.to_raw().to_bytes()).unwrap();
    let out = gtct(&["decode", "--tensor", post.to_str().unwrap(), "--lm-counts", counts.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn loss_command_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let lat = build(&TopologySpec::new(Topology::CtcLike, vec![1, 2], 3)).unwrap();
    let graph = tmp.path().join("graph.json");
    fs::write(&graph, serialize(&lat).unwrap()).unwrap();
    let logits: Vec<f64> = (0..4 * 3 * 3).map(|i| ((i * 5) % 7) as f64 * 0.3).collect();
    let post = PosteriorTensor::from_logits(4, 3, 3, logits).unwrap();
    let tensor = tmp.path().join("post.gtct");
    fs::write(&tensor, post.to_raw().to_bytes()).unwrap();
    let out_dir = tmp.path().join("out");
    let out = gtct(&[
        "loss",
        "--graph",
        graph.to_str().unwrap(),
        "--tensor",
        tensor.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let expected = loss_and_grad(&lat, &post).unwrap();
    assert!((field(&stdout(&out), "loss") - expected.loss).abs() < 1e-11);
    let grad = RawTensor::read_from(&fs::read(out_dir.join("grad.gtct")).unwrap()[..]).unwrap();
    assert_eq!(grad.dims, vec![4, 3, 3]);
    assert_eq!(grad.data, expected.grad);

    // Tensor too short for the transcript.
    let short = PosteriorTensor::from_logits(1, 3, 3, vec![0.0; 9]).unwrap();
    fs::write(&tensor, short.to_raw().to_bytes()).unwrap();
    let out = gtct(&["loss", "--graph", graph.to_str().unwrap(), "--tensor", tensor.to_str().unwrap()]);
    assert_eq!(code(&out), 3);

    fs::write(&graph, "{ \"nodes\": [").unwrap();
    let out = gtct(&["loss", "--graph", graph.to_str().unwrap(), "--tensor", tensor.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn decode_tensor_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mut logits = Vec::new();
    for hot in [1usize, 1, 0, 2] {
        for _ in 0..5 {
            logits.extend((0..3).map(|k| if k == hot { 3.0 } else { 0.0 }));
        }
    }
    let post = PosteriorTensor::from_logits(4, 5, 3, logits).unwrap();
    let path = tmp.path().join("post.gtct");
    fs::write(&path, post.to_raw().to_bytes()).unwrap();
    let p = path.to_str().unwrap();
    let ctc = stdout(&gtct(&["decode", "--tensor", p]));
    assert!(ctc.contains("greedy (ctc-like) [1,2]"), "{ctc}");
    assert!(ctc.contains("beam [1,2]"), "{ctc}");
    let mono = stdout(&gtct(&["decode", "--tensor", p, "--topology", "mono-rnnt"]));
    assert!(mono.contains("greedy (mono-rnnt) [1,1,2]"), "{mono}");
}
