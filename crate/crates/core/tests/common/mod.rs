//! Independent reference implementations used by the integration tests.
//!
//! Each oracle is written from the definition, not from the library code it
//! checks, and favours obviousness over speed.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use pbsmt::decoder::FeatureWeights;
use pbsmt::lm::NGramModel;
use pbsmt::phrasetable::{PhraseEntry, PhraseTable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

// ───────────────────────────────────────────────────────────────────────────
// BLEU
// ───────────────────────────────────────────────────────────────────────────

fn grams(s: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for i in 0..=s.len() - n {
            *m.entry(&s[i..i + n]).or_default() += 1;
        }
    }
    m
}

/// Textbook corpus BLEU-4, uniform weights, no smoothing, in [0, 100];
/// orders with no candidate n-grams are dropped from the mean.
pub fn bleu_oracle(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut matched = [0u64; 4];
    let mut total = [0u64; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in cands.iter().zip(refs) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4 {
            let (cg, rg) = (grams(c, n), grams(r, n));
            for (g, k) in &cg {
                matched[n - 1] += (*k).min(rg.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }
    let orders: Vec<usize> = (0..4).filter(|&i| total[i] > 0).collect();
    if orders.is_empty() || orders.iter().any(|&i| matched[i] == 0) {
        return 0.0;
    }
    let log_p: f64 = orders.iter().map(|&i| (matched[i] as f64 / total[i] as f64).ln()).sum::<f64>() / orders.len() as f64;
    let bp = if c_len >= r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    100.0 * bp * log_p.exp()
}

// ───────────────────────────────────────────────────────────────────────────
// Phrase extraction
// ───────────────────────────────────────────────────────────────────────────

/// All (s1, s2, t1, t2) half-open span pairs consistent with `links`, found
/// by testing every span pair against the definition.
pub fn consistent_spans(
    links: &BTreeSet<(usize, usize)>,
    ns: usize,
    nt: usize,
    max_len: usize,
) -> BTreeSet<(usize, usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for s1 in 0..ns {
        for s2 in s1 + 1..=ns {
            for t1 in 0..nt {
                for t2 in t1 + 1..=nt {
                    if s2 - s1 > max_len || t2 - t1 > max_len {
                        continue;
                    }
                    let in_s = |i: usize| s1 <= i && i < s2;
                    let in_t = |j: usize| t1 <= j && j < t2;
                    let some_inside = links.iter().any(|&(i, j)| in_s(i) && in_t(j));
                    let crossing = links.iter().any(|&(i, j)| in_s(i) != in_t(j));
                    if some_inside && !crossing {
                        out.insert((s1, s2, t1, t2));
                    }
                }
            }
        }
    }
    out
}

// ───────────────────────────────────────────────────────────────────────────
// Decoder
// ───────────────────────────────────────────────────────────────────────────

/// Natural-log LM probability of `word` after the full history `hist`
/// (which starts with `<s>`).
fn lm_ln(model: &NGramModel, hist: &[String], word: &str) -> f64 {
    let keep = hist.len().min(model.order - 1);
    let ctx: Vec<&str> = hist[hist.len() - keep..].iter().map(String::as_str).collect();
    model.prob(&ctx, word).ln()
}

/// Best model score over every ordered segmentation of `sentence` into
/// table phrases with every choice of translation, by plain depth-first
/// enumeration (no recombination, no pruning, no distortion limit).
pub fn exhaustive_best(sentence: &[String], table: &PhraseTable, model: &NGramModel, w: &FeatureWeights) -> Option<f64> {
    struct Ctx<'a> {
        sentence: &'a [String],
        table: &'a PhraseTable,
        model: &'a NGramModel,
        w: &'a FeatureWeights,
        best: Option<f64>,
    }
    fn go(c: &mut Ctx<'_>, covered: &mut Vec<bool>, prev_end: usize, hist: &mut Vec<String>, score: f64) {
        let n = c.sentence.len();
        if covered.iter().all(|&b| b) {
            let total = score + c.w.w_lm * lm_ln(c.model, hist, "</s>");
            if c.best.map_or(true, |b| total > b) {
                c.best = Some(total);
            }
            return;
        }
        for s in 0..n {
            for e in s + 1..=n {
                if covered[s..e].iter().any(|&b| b) {
                    break;
                }
                let entries: Vec<PhraseEntry> = c.table.get(&c.sentence[s..e]).to_vec();
                for entry in entries {
                    let f = entry.features();
                    let mut add = c.w.w_phi_fwd * f[0].ln()
                        + c.w.w_phi_bwd * f[1].ln()
                        + c.w.w_lex_fwd * f[2].ln()
                        + c.w.w_lex_bwd * f[3].ln();
                    add += c.w.w_word_penalty * -(entry.tgt.len() as f64);
                    add -= c.w.w_distortion * (s as f64 - prev_end as f64).abs();
                    let mark = hist.len();
                    for t in &entry.tgt {
                        add += c.w.w_lm * lm_ln(c.model, hist, t);
                        hist.push(t.clone());
                    }
                    for b in &mut covered[s..e] {
                        *b = true;
                    }
                    go(c, covered, e, hist, score + add);
                    for b in &mut covered[s..e] {
                        *b = false;
                    }
                    hist.truncate(mark);
                }
            }
        }
    }
    let mut c = Ctx {
        sentence,
        table,
        model,
        w,
        best: None,
    };
    let mut covered = vec![false; sentence.len()];
    let mut hist = vec!["<s>".to_string()];
    go(&mut c, &mut covered, 0, &mut hist, 0.0);
    c.best
}

/// A random phrase table of exactly `size` entries over source words
/// `f0..f{vocab}` and target words `e0..e{vocab}`: every source word gets
/// one or two single-word entries and the rest are multi-word phrases of
/// up to three words.
pub fn random_table(rng: &mut ChaCha8Rng, vocab: usize, size: usize) -> PhraseTable {
    let mut map: BTreeMap<Vec<String>, BTreeMap<Vec<String>, PhraseEntry>> = BTreeMap::new();
    let mut count = 0;
    let mut add = |rng: &mut ChaCha8Rng, src: Vec<String>, count: &mut usize| {
        let tlen = rng.gen_range(1..=3);
        let tgt: Vec<String> = (0..tlen).map(|_| format!("e{}", rng.gen_range(0..vocab))).collect();
        let mut p = || rng.gen_range(0.05..1.0);
        let entry = PhraseEntry {
            tgt: tgt.clone(),
            phi_tgt_given_src: p(),
            phi_src_given_tgt: p(),
            lex_tgt_given_src: p(),
            lex_src_given_tgt: p(),
        };
        if map.entry(src).or_default().insert(tgt, entry).is_none() {
            *count += 1;
        }
    };
    for i in 0..vocab {
        let k = rng.gen_range(1..=2);
        for _ in 0..k {
            add(rng, vec![format!("f{i}")], &mut count);
        }
    }
    while count < size {
        let slen = rng.gen_range(2..=3);
        let src: Vec<String> = (0..slen).map(|_| format!("f{}", rng.gen_range(0..vocab))).collect();
        add(rng, src, &mut count);
    }
    let entries = map.into_iter().map(|(s, m)| (s, m.into_values().collect())).collect();
    PhraseTable::from_entries(entries, 3)
}

/// A trigram KN model over target words `e0..e{vocab}`.
pub fn random_lm(rng: &mut ChaCha8Rng, vocab: usize, sentences: usize) -> NGramModel {
    let corpus: Vec<Vec<String>> = (0..sentences)
        .map(|_| {
            let len = rng.gen_range(2..=8);
            (0..len).map(|_| format!("e{}", rng.gen_range(0..vocab))).collect()
        })
        .collect();
    let counts = pbsmt::lm::count_ngrams(corpus.iter(), 3).unwrap();
    pbsmt::lm::estimate_kn(&counts, &pbsmt::lm::estimate_discounts(&counts)).unwrap()
}

/// Model score of a given segmentation (segments in target order),
/// computed the same way as [`exhaustive_best`] scores its paths.
pub fn rescore(segments: &[pbsmt::decoder::Segment], model: &NGramModel, w: &FeatureWeights) -> f64 {
    let mut hist = vec!["<s>".to_string()];
    let mut prev_end = 0;
    let mut score = 0.0;
    for seg in segments {
        let f = seg.features;
        score += w.w_phi_fwd * f[0].ln() + w.w_phi_bwd * f[1].ln() + w.w_lex_fwd * f[2].ln() + w.w_lex_bwd * f[3].ln();
        score += w.w_word_penalty * -(seg.tgt.len() as f64);
        score -= w.w_distortion * (seg.src_start as f64 - prev_end as f64).abs();
        for t in &seg.tgt {
            score += w.w_lm * lm_ln(model, &hist, t);
            hist.push(t.clone());
        }
        prev_end = seg.src_end;
    }
    score + w.w_lm * lm_ln(model, &hist, "</s>")
}
