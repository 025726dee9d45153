//! Language models for shallow fusion.
//!
//! The n-gram counts file has one `context<TAB>label<TAB>count` entry per
//! line. `context` is a space-separated list of label ids, where `<s>` marks
//! the sentence start; it may be empty for unigram counts. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::HashMap;

use thiserror::Error;

use crate::lattice::{Label, BLANK};

/// Context token for the sentence start.
pub const SOS: Label = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum LmError {
    #[error("counts line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vocabulary must contain blank and at least one label")]
    Vocab,
}

pub trait LanguageModel {
    /// Log-probability of a blank-free label prefix.
    fn score(&self, prefix: &[Label]) -> f64;
}

/// Assigns log-probability 0 to every prefix.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformLm;

impl LanguageModel for UniformLm {
    fn score(&self, _prefix: &[Label]) -> f64 {
        0.0
    }
}

/// Count-based n-gram model with add-one smoothing.
///
/// A history is looked up with its longest stored suffix; when no suffix
/// (not even the empty context) has counts, the next label is uniform.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramLm {
    order: usize,
    vocab: usize,
    counts: HashMap<Vec<Label>, HashMap<Label, u64>>,
    totals: HashMap<Vec<Label>, u64>,
}

impl NgramLm {
    pub fn from_counts(text: &str, vocab: usize) -> Result<Self, LmError> {
        if vocab < 2 {
            return Err(LmError::Vocab);
        }
        let mut counts: HashMap<Vec<Label>, HashMap<Label, u64>> = HashMap::new();
        let mut order = 1;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| LmError::Parse { line, message };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let [context, label, count] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let context = context
                .split_whitespace()
                .map(|tok| match tok {
                    "<s>" => Ok(SOS),
                    _ => parse_label(tok, vocab).map_err(&err),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let label = parse_label(label.trim(), vocab).map_err(&err)?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid count '{}'", count.trim())))?;
            order = order.max(context.len() + 1);
            *counts.entry(context).or_default().entry(label).or_default() += count;
        }
        let totals = counts
            .iter()
            .map(|(ctx, m)| (ctx.clone(), m.values().sum()))
            .collect();
        Ok(Self {
            order,
            vocab,
            counts,
            totals,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `ln p(label | history)` where `history` is the blank-free prefix.
    pub fn extension_log_prob(&self, history: &[Label], label: Label) -> f64 {
        let labels = (self.vocab - 1) as f64;
        let want = self.order - 1;
        let mut ctx: Vec<Label> = Vec::with_capacity(want);
        let pad = want.saturating_sub(history.len());
        ctx.extend(std::iter::repeat_n(SOS, pad));
        ctx.extend_from_slice(&history[history.len() - (want - pad)..]);
        for drop in 0..=ctx.len() {
            let suffix = &ctx[drop..];
            if let (Some(m), Some(&total)) = (self.counts.get(suffix), self.totals.get(suffix)) {
                let c = m.get(&label).copied().unwrap_or(0) as f64;
                return ((c + 1.0) / (total as f64 + labels)).ln();
            }
        }
        -labels.ln()
    }
}

fn parse_label(tok: &str, vocab: usize) -> Result<Label, String> {
    let k: Label = tok.parse().map_err(|_| format!("invalid label '{tok}'"))?;
    if k == BLANK || k >= vocab {
        return Err(format!("label {k} must lie in 1..{vocab}"));
    }
    Ok(k)
}

impl LanguageModel for NgramLm {
    fn score(&self, prefix: &[Label]) -> f64 {
        (0..prefix.len())
            .map(|n| self.extension_log_prob(&prefix[..n], prefix[n]))
            .sum()
    }
}
