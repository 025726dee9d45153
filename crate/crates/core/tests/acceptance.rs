//! Acceptance suite. Prints one PASS/FAIL line per criterion on stdout and
//! timings on stderr; exits non-zero if any criterion fails.

use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gtct::loss::GradMutation;
use gtct::model::{train_toy, TrainConfig};
use gtct::verify::{
    check_beam_exactness, check_ctc_reduction, check_gradients, check_monornnt_reduction,
    check_oracle_equivalence, check_t_invariance, CaseParams,
};
use gtct::Topology;

const SEED: u64 = 20240917;

struct Outcome {
    pass: bool,
    line: String,
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn timed<T>(name: &str, limit: Duration, f: impl FnOnce() -> T) -> (T, bool) {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    eprintln!("[timing] {name}: {took:.2?} (limit {limit:.0?})");
    (out, took < limit)
}

/// Runs criteria 1 through 8. The returned report holds no timing data, so
/// two runs with the same seed must produce identical text.
fn run_criteria(timing_ok: &mut bool) -> (Vec<Outcome>, String) {
    let both = &Topology::ALL;
    let mut out = Vec::new();
    let mut max_prob: f64 = 0.0;

    let (dev, ok) = timed("oracle", Duration::from_secs(30), || {
        check_oracle_equivalence(SEED, 200, both, &CaseParams::new(5, 3, 4)).expect("feasible cases")
    });
    *timing_ok &= ok;
    max_prob = max_prob.max(dev.max_probability);
    let pass = dev.max_deviation < 1e-10;
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 1 oracle equivalence: {} cases={} max_abs_diff={:.3e} (tol 1e-10) worst=[{}]",
            verdict(pass),
            dev.cases,
            dev.max_deviation,
            dev.worst
                .map(|w| format!("seed={} topology={}", w.seed, w.topology))
                .unwrap_or_default()
        ),
    });

    let (grad, ok) = timed("gradients", Duration::from_secs(120), || {
        check_gradients(SEED, 200, both, &CaseParams::new(4, 2, 3), 1e-5, GradMutation::None)
            .expect("feasible cases")
    });
    *timing_ok &= ok;
    max_prob = max_prob.max(grad.relative.max_probability);
    let pass = grad.relative.max_deviation < 1e-6 && grad.max_row_sum < 1e-9;
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 2 gradient check: {} cases={} max_rel_err={:.3e} (tol 1e-6) max_row_sum={:.3e} (tol 1e-9) worst=[{}]",
            verdict(pass),
            grad.relative.cases,
            grad.relative.max_deviation,
            grad.max_row_sum,
            grad.relative.worst.map(|w| w.to_string()).unwrap_or_default()
        ),
    });

    let (dev, ok) = timed("t-invariance", Duration::from_secs(60), || {
        check_t_invariance(SEED, 100, both, &CaseParams::new(32, 6, 5)).expect("feasible cases")
    });
    *timing_ok &= ok;
    max_prob = max_prob.max(dev.max_probability);
    let pass = dev.max_deviation < 1e-10;
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 3 marginal invariance over t: {} cases={} max_abs_diff={:.3e} (tol 1e-10)",
            verdict(pass),
            dev.cases,
            dev.max_deviation
        ),
    });

    let (dev, ok) = timed("ctc reduction", Duration::from_secs(60), || {
        check_ctc_reduction(SEED, 100, &CaseParams::new(10, 4, 5)).expect("feasible cases")
    });
    *timing_ok &= ok;
    max_prob = max_prob.max(dev.max_probability);
    let pass = dev.max_deviation < 1e-10;
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 4 CTC reduction: {} cases={} max_abs_diff={:.3e} (tol 1e-10)",
            verdict(pass),
            dev.cases,
            dev.max_deviation
        ),
    });

    let (dev, ok) = timed("mono-rnnt reduction", Duration::from_secs(60), || {
        check_monornnt_reduction(SEED, 100, &CaseParams::new(10, 4, 5)).expect("feasible cases")
    });
    *timing_ok &= ok;
    max_prob = max_prob.max(dev.max_probability);
    let pass = dev.max_deviation < 1e-10;
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 5 MonoRNN-T reduction: {} cases={} max_abs_diff={:.3e} (tol 1e-10)",
            verdict(pass),
            dev.cases,
            dev.max_deviation
        ),
    });

    let pass = max_prob <= 1.0 + 1e-9;
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 6 normalization bound: {} max_exp_log_marginal={:.15} (bound 1 + 1e-9)",
            verdict(pass),
            max_prob
        ),
    });

    let (beam, ok) = timed("beam exactness", Duration::from_secs(60), || {
        check_beam_exactness(SEED, 200, 4, 3)
    });
    *timing_ok &= ok;
    let pass = beam.mismatches == 0;
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 7 beam search exactness: {} cases={} mismatches={} max_score_gap={:.3e}{}",
            verdict(pass),
            beam.cases,
            beam.mismatches,
            beam.max_score_gap,
            beam.first_mismatch.map(|s| format!(" first_mismatch_seed={s}")).unwrap_or_default()
        ),
    });

    let (runs, ok) = timed("learning", Duration::from_secs(120), || {
        Topology::ALL.map(|topology| {
            let cfg = TrainConfig {
                topology,
                seed: 7,
                ..TrainConfig::default()
            };
            (topology, train_toy(&cfg).expect("feasible task").1)
        })
    });
    *timing_ok &= ok;
    let mut pass = true;
    let mut detail = String::new();
    for (topology, r) in &runs {
        let ratio = r.final_loss / r.initial_loss;
        pass &= ratio <= 0.1 && r.exact_match >= 0.95;
        write!(
            detail,
            " [{topology}: initial_loss={:.6} final_loss={:.6} ratio={:.4} exact_match={:.2}]",
            r.initial_loss, r.final_loss, ratio, r.exact_match
        )
        .unwrap();
    }
    out.push(Outcome {
        pass,
        line: format!(
            "criterion 8 learning sanity: {} utterances=20 vocab=6 steps=500 seed=7{detail}",
            verdict(pass)
        ),
    });

    let report = out.iter().map(|o| o.line.as_str()).collect::<Vec<_>>().join("\n");
    (out, report)
}

fn main() -> ExitCode {
    println!("acceptance suite, seed {SEED}");
    let mut timing_ok = true;
    let (outcomes, first) = run_criteria(&mut timing_ok);
    for o in &outcomes {
        println!("{}", o.line);
    }
    let (_, second) = run_criteria(&mut timing_ok);
    let same = first == second;
    println!(
        "criterion 9 determinism: {} second run report {} ({} bytes)",
        verdict(same),
        if same { "byte-identical" } else { "differs" },
        first.len()
    );
    println!("runtime limits: {}", verdict(timing_ok));

    let all = outcomes.iter().all(|o| o.pass) && same && timing_ok;
    println!("acceptance: {}", verdict(all));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
