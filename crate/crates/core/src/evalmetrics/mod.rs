//! Corpus BLEU, pre/post-editing comparison and the experiment harness.

mod experiment;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::decoder::TranslationOutput;
use crate::{Error, Result};

pub use experiment::{prepare_experiment, run_experiment, table2_tsv, ExperimentReport, PreparedExperiment, StageTimings};

pub const DEFAULT_MAX_N: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// Modified n-gram precisions p_1..p_max_n.
    pub precisions: Vec<f64>,
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub brevity_penalty: f64,
    /// 0..=100.
    pub score: f64,
    pub candidate_length: usize,
    pub reference_length: usize,
}

impl BleuReport {
    /// `100.0` for integral scores, two decimals otherwise.
    pub fn display_score(&self) -> String {
        format_score(self.score)
    }
}

pub fn format_score(score: f64) -> String {
    let rounded = (score * 100.0).round() / 100.0;
    if rounded.fract() == 0.0 {
        format!("{rounded:.1}")
    } else {
        format!("{rounded:.2}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BleuOptions {
    pub max_n: usize,
    /// Add-one smoothing of p_n for n ≥ 2; meant for sentence-level
    /// diagnostics, off for reported scores.
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions {
            max_n: DEFAULT_MAX_N,
            smoothing: false,
        }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus-level BLEU against a single reference per candidate.
///
/// Orders for which the candidates contain no n-gram at all are excluded
/// from the geometric mean.
pub fn bleu<S: AsRef<str>, T: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<T>]) -> Result<BleuReport> {
    bleu_with(candidates, references, BleuOptions::default())
}

pub fn bleu_with<S: AsRef<str>, T: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<T>],
    opts: BleuOptions,
) -> Result<BleuReport> {
    if candidates.len() != references.len() {
        return Err(Error::validation(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if references.is_empty() {
        return Err(Error::validation("BLEU needs at least one reference"));
    }
    if opts.max_n == 0 {
        return Err(Error::validation("max_n must be at least 1"));
    }
    let mut matches = vec![0u64; opts.max_n];
    let mut totals = vec![0u64; opts.max_n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=opts.max_n {
            let rc = ngram_counts(r, n);
            for (g, k) in ngram_counts(c, n) {
                matches[n - 1] += k.min(rc.get(&g).copied().unwrap_or(0));
                totals[n - 1] += k;
            }
        }
    }
    let precisions: Vec<f64> = (0..opts.max_n)
        .map(|i| {
            if opts.smoothing && i > 0 {
                (matches[i] + 1) as f64 / (totals[i] + 1) as f64
            } else if totals[i] == 0 {
                0.0
            } else {
                matches[i] as f64 / totals[i] as f64
            }
        })
        .collect();
    let brevity_penalty = if c_len == 0 {
        0.0
    } else if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    // orders the candidates are too short to have any n-gram of are left
    // out of the mean (effective order), so bleu(x, x) = 100 for short x
    let used: Vec<f64> = (0..opts.max_n).filter(|&i| totals[i] > 0).map(|i| precisions[i]).collect();
    let score = if c_len == 0 || used.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let mean = used.iter().map(|p| p.ln()).sum::<f64>() / used.len() as f64;
        (100.0 * brevity_penalty * mean.exp()).min(100.0)
    };
    Ok(BleuReport {
        precisions,
        matches,
        totals,
        brevity_penalty,
        score,
        candidate_length: c_len,
        reference_length: r_len,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrePostReport {
    pub pre: BleuReport,
    pub post: BleuReport,
    /// post − pre, in BLEU points.
    pub delta: f64,
}

pub fn compare_pre_post<T: AsRef<str>>(
    pre: &[TranslationOutput],
    post: &[TranslationOutput],
    references: &[Vec<T>],
) -> Result<PrePostReport> {
    if pre.len() != post.len() {
        return Err(Error::validation(format!("{} pre-edit outputs but {} post-edit", pre.len(), post.len())));
    }
    let toks = |v: &[TranslationOutput]| v.iter().map(|o| o.tokens.clone()).collect::<Vec<_>>();
    let pre = bleu(&toks(pre), references)?;
    let post = bleu(&toks(post), references)?;
    Ok(PrePostReport {
        delta: post.score - pre.score,
        pre,
        post,
    })
}

/// `brochure<TAB>before<TAB>after` rows, scores as printed by [`format_score`].
pub fn table3_tsv(rows: &[(String, PrePostReport)]) -> String {
    let mut out = String::from("brochure\tbefore\tafter\n");
    for (name, r) in rows {
        out.push_str(&format!("{}\t{}\t{}\n", name, format_score(r.pre.score), format_score(r.post.score)));
    }
    out
}
