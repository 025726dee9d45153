use gtct::loss::{GradMutation, LossError};
use gtct::oracle::{self, OracleError};
use gtct::verify::{
    check_ctc_reduction, check_gradients, check_monornnt_reduction, check_oracle_equivalence,
    check_t_invariance, CaseParams, CheckError, Deviation,
};
use gtct::Topology;

use crate::{CaseArgs, CliError, CliResult, Mutation};

const GRAD_TOL: f64 = 1e-6;
const ROW_SUM_TOL: f64 = 1e-9;
const MARGINAL_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-5;

fn params(args: &CaseArgs, t: usize, u: usize, k: usize) -> Result<CaseParams, CliError> {
    let p = CaseParams::new(args.max_t.unwrap_or(t), args.max_u.unwrap_or(u), args.vocab.unwrap_or(k));
    if p.max_frames == 0 {
        return Err(CliError::Usage("--max-t must be at least 1".into()));
    }
    if p.max_vocab < 2 {
        return Err(CliError::Usage("--vocab must be at least 2 (blank plus one label)".into()));
    }
    if p.max_frames > oracle::MAX_FRAMES {
        return Err(CliError::Usage(format!(
            "--max-t {} exceeds the brute-force limit of {} frames",
            p.max_frames,
            oracle::MAX_FRAMES
        )));
    }
    if 2 * p.max_labels + 3 > oracle::MAX_NODES {
        return Err(CliError::Usage(format!(
            "--max-u {} exceeds the brute-force limit of {} labels",
            p.max_labels,
            (oracle::MAX_NODES - 3) / 2
        )));
    }
    Ok(p)
}

fn header(name: &str, args: &CaseArgs, p: &CaseParams, topologies: &[Topology]) {
    let names: Vec<&str> = topologies.iter().map(|t| t.name()).collect();
    println!(
        "{name} seed={} cases={} topologies={} max_t={} max_u={} vocab={}",
        args.seed,
        args.cases,
        names.join(","),
        p.max_frames,
        p.max_labels,
        p.max_vocab
    );
}

fn check_failed(e: CheckError) -> CliError {
    match &e {
        CheckError::Loss {
            source: LossError::InfeasibleLength { .. } | LossError::NoPath,
            ..
        }
        | CheckError::Oracle {
            source: OracleError::Infeasible { .. },
            ..
        } => CliError::Verify(format!("{e} (raise --max-t or lower --max-u)")),
        CheckError::Oracle {
            source: OracleError::TooLarge(_),
            ..
        } => CliError::Usage(e.to_string()),
        _ => CliError::Verify(e.to_string()),
    }
}

fn worst(dev: &Deviation) -> String {
    dev.worst.map(|w| format!(" worst=[{w}]")).unwrap_or_default()
}

pub fn check_grad(args: &CaseArgs, mutate: Option<Mutation>) -> CliResult {
    let p = params(args, 4, 2, 3)?;
    let topologies = args.topologies();
    header("check-grad", args, &p, &topologies);
    let mutation = match mutate {
        Some(Mutation::FlipSign) => {
            println!("mutation: flip-sign");
            GradMutation::FlipSign
        }
        None => GradMutation::None,
    };
    let report = check_gradients(args.seed, args.cases, &topologies, &p, FD_STEP, mutation).map_err(check_failed)?;
    let rel = report.relative.max_deviation;
    let pass = rel < GRAD_TOL && report.max_row_sum < ROW_SUM_TOL;
    println!(
        "{} max_rel_err={rel:.3e} (tol {GRAD_TOL:e}) max_row_sum={:.3e} (tol {ROW_SUM_TOL:e}){}",
        if pass { "PASS" } else { "FAIL" },
        report.max_row_sum,
        worst(&report.relative)
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::Verify(format!(
            "gradient check failed{}",
            worst(&report.relative)
        )))
    }
}

pub fn check_oracle(args: &CaseArgs) -> CliResult {
    let p = params(args, 5, 3, 4)?;
    let topologies = args.topologies();
    header("check-oracle", args, &p, &topologies);
    let mut laws: Vec<(&str, Deviation)> = vec![
        (
            "brute-force equivalence",
            check_oracle_equivalence(args.seed, args.cases, &topologies, &p).map_err(check_failed)?,
        ),
        (
            "invariance over t",
            check_t_invariance(args.seed, args.cases, &topologies, &p).map_err(check_failed)?,
        ),
    ];
    if topologies.contains(&Topology::CtcLike) {
        laws.push((
            "CTC reduction",
            check_ctc_reduction(args.seed, args.cases, &p).map_err(check_failed)?,
        ));
    }
    if topologies.contains(&Topology::MonoRnnt) {
        laws.push((
            "MonoRNN-T reduction",
            check_monornnt_reduction(args.seed, args.cases, &p).map_err(check_failed)?,
        ));
    }
    let mut failed = Vec::new();
    let mut max_prob: f64 = 0.0;
    for (name, dev) in &laws {
        let pass = dev.max_deviation < MARGINAL_TOL;
        max_prob = max_prob.max(dev.max_probability);
        println!(
            "{} {name}: cases={} max_abs_diff={:.3e} (tol {MARGINAL_TOL:e}){}",
            if pass { "PASS" } else { "FAIL" },
            dev.cases,
            dev.max_deviation,
            if pass { String::new() } else { worst(dev) }
        );
        if !pass {
            failed.push(*name);
        }
    }
    let bounded = max_prob <= 1.0 + 1e-9;
    println!(
        "{} normalization: max_probability={max_prob:.15}",
        if bounded { "PASS" } else { "FAIL" }
    );
    if !bounded {
        failed.push("normalization");
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!("failed: {}", failed.join(", "))))
    }
}
