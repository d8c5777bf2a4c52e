//! Phrase-based stack decoding under a log-linear model.
//!
//! A hypothesis covering `k` source words lives in stack `k`. Expansion
//! applies any translation option over an uncovered span within the
//! distortion limit; hypotheses agreeing on (coverage, LM state, end of the
//! last translated span) are recombined, and each stack is cut to
//! `beam_size` by score plus future-cost estimate.
//!
//! All scores are natural logs:
//!
//! ```text
//! score = Σ_phrases Σ_i w_i ln f_i
//!       + w_lm · ln P_lm(target + </s>)
//!       − w_word_penalty · |target|
//!       − w_distortion · Σ_phrases |start − previous_end|
//! ```

use std::collections::HashMap;
use std::f64::consts::LN_10;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lm::{NGramModel, BOS_ID, EOS_ID};
use crate::phrasetable::PhraseTable;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureWeights {
    pub w_phi_fwd: f64,
    pub w_phi_bwd: f64,
    pub w_lex_fwd: f64,
    pub w_lex_bwd: f64,
    pub w_lm: f64,
    /// Weight of the word-penalty feature, whose value is −1 per target
    /// word; the default −1.0 thus rewards each word, offsetting the
    /// language model's bias towards short output.
    pub w_word_penalty: f64,
    /// Multiplies the (non-positive) jump cost.
    pub w_distortion: f64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights {
            w_phi_fwd: 0.2,
            w_phi_bwd: 0.2,
            w_lex_fwd: 0.2,
            w_lex_bwd: 0.2,
            w_lm: 0.5,
            w_word_penalty: -1.0,
            w_distortion: 0.3,
        }
    }
}

impl FeatureWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_phi_fwd,
            self.w_phi_bwd,
            self.w_lex_fwd,
            self.w_lex_bwd,
            self.w_lm,
            self.w_word_penalty,
            self.w_distortion,
        ];
        if all.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(Error::validation("feature weights must be finite"))
        }
    }

    /// Weighted word-penalty contribution of `words` target words.
    pub fn word_penalty(&self, words: usize) -> f64 {
        -self.w_word_penalty * words as f64
    }

    /// Weighted log translation-model score of one phrase pair, features in
    /// table order (phi fwd, phi bwd, lex fwd, lex bwd).
    pub fn tm_score(&self, features: &[f64; 4]) -> f64 {
        self.w_phi_fwd * features[0].ln()
            + self.w_phi_bwd * features[1].ln()
            + self.w_lex_fwd * features[2].ln()
            + self.w_lex_bwd * features[3].ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub beam_size: usize,
    /// Maximum jump between consecutive source spans; negative = unlimited.
    pub distortion_limit: i64,
    /// Longest source span looked up; also capped by the table's own limit.
    pub max_phrase_len: usize,
    /// Translation options kept per source span, best first; 0 keeps all.
    pub max_options_per_span: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            beam_size: 100,
            distortion_limit: 6,
            max_phrase_len: crate::phrasetable::DEFAULT_MAX_LEN,
            max_options_per_span: 20,
        }
    }
}

impl DecoderConfig {
    /// No pruning and no reordering limit: exact search.
    pub fn exhaustive() -> Self {
        DecoderConfig {
            beam_size: usize::MAX,
            distortion_limit: -1,
            max_phrase_len: usize::MAX,
            max_options_per_span: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::validation("beam_size must be at least 1"));
        }
        if self.max_phrase_len == 0 {
            return Err(Error::validation("max_phrase_len must be at least 1"));
        }
        Ok(())
    }
}

/// One applied phrase: source span (half-open), its target words and the
/// features it was scored with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub src_start: usize,
    pub src_end: usize,
    pub tgt: Vec<String>,
    pub features: [f64; 4],
    /// Copied verbatim from the source rather than taken from the table.
    pub passthrough: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationOutput {
    pub tokens: Vec<String>,
    /// Output positions holding source words copied verbatim.
    pub oov_spans: Vec<usize>,
    pub model_score: f64,
    /// Segments in target order.
    pub segmentation: Vec<Segment>,
}

impl TranslationOutput {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("output serializes")
    }

    pub fn from_json(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::parse("decoder report", 0, e.to_string()))
    }
}

/// A candidate translation of one source span.
#[derive(Clone, Debug)]
struct TransOption {
    start: usize,
    end: usize,
    tgt: Vec<String>,
    tgt_ids: Vec<u32>,
    features: [f64; 4],
    passthrough: bool,
    /// Weighted TM score plus word penalty.
    static_score: f64,
}

#[derive(Clone, Debug)]
struct Hyp {
    coverage: Vec<u64>,
    covered: usize,
    lm_state: Vec<u32>,
    last_end: usize,
    score: f64,
    future: f64,
    back: Option<(usize, usize)>,
}

fn bit(cov: &[u64], i: usize) -> bool {
    cov[i / 64] >> (i % 64) & 1 == 1
}

fn set_bits(cov: &mut [u64], start: usize, end: usize) {
    for i in start..end {
        cov[i / 64] |= 1 << (i % 64);
    }
}

/// Natural-log LM contribution of `words` after `state`, updating `state`
/// to the last `order - 1` ids.
fn lm_extend(model: &NGramModel, state: &mut Vec<u32>, words: &[u32]) -> f64 {
    let keep = model.order - 1;
    let mut total = 0.0;
    for &w in words {
        total += model.score_ids(state, w);
        state.push(w);
        if state.len() > keep {
            state.remove(0);
        }
    }
    total * LN_10
}

fn initial_state(model: &NGramModel) -> Vec<u32> {
    if model.order > 1 {
        vec![BOS_ID]
    } else {
        Vec::new()
    }
}

fn jump(prev_end: usize, start: usize) -> f64 {
    (start as f64 - prev_end as f64).abs()
}

/// Re-scores a segmentation from its features; `model_score` of decoder
/// output equals this value.
pub fn score_segmentation(segmentation: &[Segment], model: &NGramModel, weights: &FeatureWeights) -> f64 {
    let mut state = initial_state(model);
    let mut prev_end = 0;
    let mut score = 0.0;
    for seg in segmentation {
        let ids: Vec<u32> = seg.tgt.iter().map(|w| model.word_id(w)).collect();
        score += weights.tm_score(&seg.features);
        score += weights.word_penalty(seg.tgt.len());
        score -= weights.w_distortion * jump(prev_end, seg.src_start);
        score += weights.w_lm * lm_extend(model, &mut state, &ids);
        prev_end = seg.src_end;
    }
    score + weights.w_lm * lm_extend(model, &mut state, &[EOS_ID])
}

fn collect_options(
    sentence: &[String],
    table: &PhraseTable,
    model: &NGramModel,
    weights: &FeatureWeights,
    config: &DecoderConfig,
) -> Vec<Vec<Vec<TransOption>>> {
    let n = sentence.len();
    let max_len = config.max_phrase_len.min(table.max_len.max(1));
    // options[start][len - 1]
    let mut options: Vec<Vec<Vec<TransOption>>> = vec![Vec::new(); n];
    for start in 0..n {
        for end in start + 1..=n.min(start.saturating_add(max_len)) {
            let src = &sentence[start..end];
            let mut list: Vec<(f64, TransOption)> = table
                .get(src)
                .iter()
                .map(|e| {
                    let features = e.features();
                    let static_score =
                        weights.tm_score(&features) + weights.word_penalty(e.tgt.len());
                    let tgt_ids: Vec<u32> = e.tgt.iter().map(|w| model.word_id(w)).collect();
                    let est = static_score + weights.w_lm * lm_extend(model, &mut Vec::new(), &tgt_ids);
                    let opt = TransOption {
                        start,
                        end,
                        tgt: e.tgt.clone(),
                        tgt_ids,
                        features,
                        passthrough: false,
                        static_score,
                    };
                    (est, opt)
                })
                .collect();
            // stable: equal estimates keep table order
            list.sort_by(|a, b| b.0.total_cmp(&a.0));
            if config.max_options_per_span > 0 {
                list.truncate(config.max_options_per_span);
            }
            options[start].push(list.into_iter().map(|(_, o)| o).collect());
        }
        if options[start].is_empty() || options[start][0].is_empty() {
            // unknown word, or a word only seen inside longer phrases
            let tgt = vec![sentence[start].clone()];
            let tgt_ids = vec![model.word_id(&tgt[0])];
            let opt = TransOption {
                start,
                end: start + 1,
                tgt,
                tgt_ids,
                features: [1.0; 4],
                passthrough: true,
                static_score: weights.word_penalty(1),
            };
            if options[start].is_empty() {
                options[start].push(vec![opt]);
            } else {
                options[start][0].push(opt);
            }
        }
    }
    options
}

/// `fc[i][j]`: best estimated score for translating `i..j` in isolation.
fn future_costs(n: usize, options: &[Vec<Vec<TransOption>>], model: &NGramModel, weights: &FeatureWeights) -> Vec<Vec<f64>> {
    let mut fc = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for (start, by_len) in options.iter().enumerate() {
        for (len_idx, list) in by_len.iter().enumerate() {
            let end = start + len_idx + 1;
            for o in list {
                let est = o.static_score + weights.w_lm * lm_extend(model, &mut Vec::new(), &o.tgt_ids);
                if est > fc[start][end] {
                    fc[start][end] = est;
                }
            }
        }
    }
    for len in 2..=n {
        for i in 0..=n - len {
            let j = i + len;
            for k in i + 1..j {
                let s = fc[i][k] + fc[k][j];
                if s > fc[i][j] {
                    fc[i][j] = s;
                }
            }
        }
    }
    fc
}

fn future_of(cov: &[u64], n: usize, fc: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i < n {
        if bit(cov, i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !bit(cov, i) {
            i += 1;
        }
        total += fc[start][i];
    }
    total
}

fn first_gap(cov: &[u64], n: usize) -> Option<usize> {
    (0..n).find(|&i| !bit(cov, i))
}

/// Translates one tokenized sentence. Never fails: unknown words are copied
/// through and reported in `oov_spans`.
pub fn decode(
    sentence: &[String],
    table: &PhraseTable,
    model: &NGramModel,
    weights: &FeatureWeights,
    config: &DecoderConfig,
) -> TranslationOutput {
    search(sentence, table, model, weights, config).unwrap_or_else(|| {
        // the distortion limit left no complete path; retry without it
        let relaxed = DecoderConfig {
            distortion_limit: -1,
            ..*config
        };
        search(sentence, table, model, weights, &relaxed).expect("monotone path always exists")
    })
}

fn search(
    sentence: &[String],
    table: &PhraseTable,
    model: &NGramModel,
    weights: &FeatureWeights,
    config: &DecoderConfig,
) -> Option<TranslationOutput> {
    let n = sentence.len();
    let options = collect_options(sentence, table, model, weights, config);
    let fc = future_costs(n, &options, model, weights);
    let words = n.div_ceil(64).max(1);
    let limit = (config.distortion_limit >= 0).then_some(config.distortion_limit as f64);

    let mut arena: Vec<Hyp> = Vec::new();
    let mut stacks: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    let mut recomb: Vec<HashMap<(Vec<u64>, Vec<u32>, usize), usize>> = vec![HashMap::new(); n + 1];
    arena.push(Hyp {
        coverage: vec![0; words],
        covered: 0,
        lm_state: initial_state(model),
        last_end: 0,
        score: 0.0,
        future: future_of(&vec![0; words], n, &fc),
        back: None,
    });
    stacks[0].push(0);

    for k in 0..n {
        // prune: best total estimate first, earlier creation on ties
        let mut stack = std::mem::take(&mut stacks[k]);
        stack.sort_by(|&a, &b| {
            let (ha, hb) = (&arena[a], &arena[b]);
            (hb.score + hb.future).total_cmp(&(ha.score + ha.future)).then(a.cmp(&b))
        });
        stack.truncate(config.beam_size);
        for &h in &stack {
            let (cov, last_end, score) = (arena[h].coverage.clone(), arena[h].last_end, arena[h].score);
            for start in 0..n {
                if bit(&cov, start) {
                    continue;
                }
                if let Some(l) = limit {
                    if jump(last_end, start) > l {
                        continue;
                    }
                }
                for (len_idx, list) in options[start].iter().enumerate() {
                    let end = start + len_idx + 1;
                    if bit(&cov, end - 1) {
                        break;
                    }
                    let mut new_cov = cov.clone();
                    set_bits(&mut new_cov, start, end);
                    let covered = arena[h].covered + (end - start);
                    if let (Some(l), Some(gap)) = (limit, first_gap(&new_cov, n)) {
                        if jump(end, gap) > l {
                            continue;
                        }
                    }
                    let future = future_of(&new_cov, n, &fc);
                    let base = score - weights.w_distortion * jump(last_end, start);
                    for (oi, o) in list.iter().enumerate() {
                        let mut state = arena[h].lm_state.clone();
                        let lm = lm_extend(model, &mut state, &o.tgt_ids);
                        let s = base + o.static_score + weights.w_lm * lm;
                        let key = (new_cov.clone(), state, end);
                        match recomb[covered].get(&key) {
                            Some(&existing) if arena[existing].score >= s => {}
                            Some(&existing) => {
                                // replace in place so the stack slot stays valid
                                let hyp = &mut arena[existing];
                                hyp.score = s;
                                hyp.back = Some((h, option_index(start, len_idx, oi)));
                            }
                            None => {
                                let id = arena.len();
                                arena.push(Hyp {
                                    coverage: key.0.clone(),
                                    covered,
                                    lm_state: key.1.clone(),
                                    last_end: end,
                                    score: s,
                                    future,
                                    back: Some((h, option_index(start, len_idx, oi))),
                                });
                                recomb[covered].insert(key, id);
                                stacks[covered].push(id);
                            }
                        }
                    }
                }
            }
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for &h in &stacks[n] {
        let mut state = arena[h].lm_state.clone();
        let total = arena[h].score + weights.w_lm * lm_extend(model, &mut state, &[EOS_ID]);
        if best.map_or(true, |(_, b)| total > b) {
            best = Some((h, total));
        }
    }
    let (mut h, _) = best?;

    let mut applied: Vec<&TransOption> = Vec::new();
    while let Some((prev, idx)) = arena[h].back {
        let (start, len_idx, oi) = unpack_option(idx);
        applied.push(&options[start][len_idx][oi]);
        h = prev;
    }
    applied.reverse();

    let mut tokens = Vec::new();
    let mut oov_spans = Vec::new();
    let mut segmentation = Vec::with_capacity(applied.len());
    for o in applied {
        if o.passthrough {
            oov_spans.push(tokens.len());
        }
        tokens.extend(o.tgt.iter().cloned());
        segmentation.push(Segment {
            src_start: o.start,
            src_end: o.end,
            tgt: o.tgt.clone(),
            features: o.features,
            passthrough: o.passthrough,
        });
    }
    let model_score = score_segmentation(&segmentation, model, weights);
    Some(TranslationOutput {
        tokens,
        oov_spans,
        model_score,
        segmentation,
    })
}

const OPT_BITS: usize = 20;
const LEN_BITS: usize = 12;

fn option_index(start: usize, len_idx: usize, oi: usize) -> usize {
    (start << (OPT_BITS + LEN_BITS)) | (len_idx << OPT_BITS) | oi
}

fn unpack_option(idx: usize) -> (usize, usize, usize) {
    (
        idx >> (OPT_BITS + LEN_BITS),
        (idx >> OPT_BITS) & ((1 << LEN_BITS) - 1),
        idx & ((1 << OPT_BITS) - 1),
    )
}

/// Decodes every sentence on a pool of `jobs` threads (0 = all cores);
/// results are in input order and independent of `jobs`.
pub fn decode_corpus(
    sentences: &[Vec<String>],
    table: &PhraseTable,
    model: &NGramModel,
    weights: &FeatureWeights,
    config: &DecoderConfig,
    jobs: usize,
) -> Result<Vec<TranslationOutput>> {
    weights.validate()?;
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        sentences
            .par_iter()
            .map(|s| decode(s, table, model, weights, config))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{count_ngrams, estimate_kn};
    use crate::phrasetable::PhraseEntry;
    use std::collections::BTreeMap;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn entry(tgt: &str, p: f64) -> PhraseEntry {
        PhraseEntry {
            tgt: toks(tgt),
            phi_tgt_given_src: p,
            phi_src_given_tgt: p,
            lex_tgt_given_src: p,
            lex_src_given_tgt: p,
        }
    }

    fn table(rows: &[(&str, &str, f64)]) -> PhraseTable {
        let mut m: BTreeMap<Vec<String>, Vec<PhraseEntry>> = BTreeMap::new();
        for (s, t, p) in rows {
            m.entry(toks(s)).or_default().push(entry(t, *p));
        }
        PhraseTable::from_entries(m, 7)
    }

    fn lm(lines: &[&str]) -> NGramModel {
        let c: Vec<Vec<String>> = lines.iter().map(|l| toks(l)).collect();
        estimate_kn(&count_ngrams(&c, 3).unwrap(), &[0.75; 3]).unwrap()
    }

    #[test]
    fn empty_sentence() {
        let m = lm(&["x y"]);
        let out = decode(&[], &table(&[]), &m, &FeatureWeights::default(), &DecoderConfig::default());
        assert!(out.tokens.is_empty());
        let expected = 0.5 * m.prob(&["<s>"], "</s>").ln();
        assert!((out.model_score - expected).abs() < 1e-12);
    }

    #[test]
    fn oov_passthrough() {
        let m = lm(&["x y"]);
        let out = decode(&toks("zzz"), &table(&[("a", "x", 1.0)]), &m, &FeatureWeights::default(), &DecoderConfig::default());
        assert_eq!(out.tokens, toks("zzz"));
        assert_eq!(out.oov_spans, vec![0]);
    }

    #[test]
    fn monotone_word_for_word() {
        let t = table(&[("a", "x", 1.0), ("b", "y", 1.0), ("c", "z", 1.0)]);
        let m = lm(&["x y z", "z y x"]);
        let w = FeatureWeights {
            w_lm: 0.0,
            w_distortion: 1.0,
            ..FeatureWeights::default()
        };
        let out = decode(&toks("c a b a"), &t, &m, &w, &DecoderConfig::default());
        assert_eq!(out.tokens, toks("z x y x"));
        assert!(out.oov_spans.is_empty());
    }

    #[test]
    fn score_is_recomputable() {
        let t = table(&[("a", "x", 0.5), ("a b", "y x", 0.25), ("b", "y", 0.9), ("b", "w", 0.1)]);
        let m = lm(&["x y", "y x w"]);
        let w = FeatureWeights::default();
        for s in ["a b", "b a", "a b q a", "b b a"] {
            let out = decode(&toks(s), &t, &m, &w, &DecoderConfig::default());
            let re = score_segmentation(&out.segmentation, &m, &w);
            assert!((out.model_score - re).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip() {
        let t = table(&[("a", "x", 0.5)]);
        let out = decode(&toks("a q"), &t, &lm(&["x"]), &FeatureWeights::default(), &DecoderConfig::default());
        assert_eq!(TranslationOutput::from_json(&out.to_json()).unwrap(), out);
    }

    #[test]
    fn corpus_order_and_parallelism() {
        let t = table(&[("a", "x", 0.5), ("b", "y", 0.5)]);
        let m = lm(&["x y"]);
        let sents: Vec<Vec<String>> = ["a b", "b", "a a b", "", "q"].iter().map(|s| toks(s)).collect();
        let w = FeatureWeights::default();
        let c = DecoderConfig::default();
        let one = decode_corpus(&sents, &t, &m, &w, &c, 1).unwrap();
        let many = decode_corpus(&sents, &t, &m, &w, &c, 4).unwrap();
        assert_eq!(one, many);
        for (s, o) in sents.iter().zip(&one) {
            assert_eq!(&decode(s, &t, &m, &w, &c), o);
        }
        assert!(decode_corpus(&[], &t, &m, &w, &c, 2).unwrap().is_empty());
    }

    #[test]
    fn rejects_zero_beam() {
        let c = DecoderConfig {
            beam_size: 0,
            ..DecoderConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
