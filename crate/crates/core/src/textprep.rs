//! Tokenization, truecasing and sentence-pair cleaning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Brochure, ParallelCorpus};
use crate::{Error, Result};

/// Arabic-script punctuation split off like ASCII punctuation.
const ARABIC_PUNCT: &[char] = &['،', '؛', '؟', '۔', '٪', '«', '»'];
const OTHER_PUNCT: &[char] = &['“', '”', '‘', '’', '…', '–', '—', '•'];

pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || ARABIC_PUNCT.contains(&c) || OTHER_PUNCT.contains(&c)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
    /// Set when truecasing lowered the sentence-initial token, so that
    /// [`recase`] can restore it.
    pub was_truecased: bool,
}

impl TokenizedSentence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenizedSentence {
            tokens,
            was_truecased: false,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Splits on whitespace and separates leading and trailing punctuation
/// into single-character tokens. Word-internal punctuation (hyphens,
/// apostrophes, decimal points) and zero-width joiners are kept.
pub fn tokenize(line: &str) -> TokenizedSentence {
    let mut tokens = Vec::new();
    for chunk in line.split_whitespace() {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut lo = 0;
        while lo < chars.len() && is_punct(chars[lo].1) {
            tokens.push(chars[lo].1.to_string());
            lo += 1;
        }
        let mut hi = chars.len();
        while hi > lo && is_punct(chars[hi - 1].1) {
            hi -= 1;
        }
        if lo < hi {
            let start = chars[lo].0;
            let end = chars.get(hi).map_or(chunk.len(), |c| c.0);
            tokens.push(chunk[start..end].to_string());
        }
        tokens.extend(chars[hi..].iter().map(|(_, c)| c.to_string()));
    }
    TokenizedSentence::new(tokens)
}

fn attaches_left(t: &str) -> bool {
    matches!(t, "." | "," | ";" | ":" | "!" | "?" | ")" | "]" | "}" | "%" | "،" | "؛" | "؟" | "۔" | "٪" | "»" | "”" | "’" | "…")
}

fn attaches_right(t: &str) -> bool {
    matches!(t, "(" | "[" | "{" | "«" | "“" | "‘")
}

/// Inverse of [`tokenize`] up to whitespace: closing punctuation is glued to
/// the preceding token, opening punctuation to the following one.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for t in tokens {
        if !glue_next && !attaches_left(t) {
            out.push(' ');
        }
        out.push_str(t);
        glue_next = attaches_right(t);
    }
    out
}

/// Maps Arabic letter variants onto their Kurdish forms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptNormalizer {
    pub table: Vec<(char, char)>,
}

impl Default for ScriptNormalizer {
    fn default() -> Self {
        ScriptNormalizer {
            table: vec![('ي', 'ی'), ('ى', 'ی'), ('ك', 'ک')],
        }
    }
}

impl ScriptNormalizer {
    pub fn disabled() -> Self {
        ScriptNormalizer { table: Vec::new() }
    }

    pub fn apply(&self, text: &str) -> String {
        if self.table.is_empty() {
            return text.to_string();
        }
        text.chars()
            .map(|c| self.table.iter().find(|(from, _)| *from == c).map_or(c, |(_, to)| *to))
            .collect()
    }
}

fn fold(token: &str) -> String {
    token.to_lowercase()
}

fn capitalize(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruecaseModel {
    /// Case-folded token to its most frequent surface form.
    pub best_form: BTreeMap<String, String>,
    /// Surface-form frequencies; sentence-initial occurrences count 0.5.
    pub counts: BTreeMap<String, f64>,
}

impl TruecaseModel {
    pub fn train<'a>(corpus: impl IntoIterator<Item = &'a TokenizedSentence>) -> Result<Self> {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        let mut any = false;
        for s in corpus {
            any = true;
            for (i, t) in s.tokens.iter().enumerate() {
                let w = if i == 0 { 0.5 } else { 1.0 };
                *counts.entry(t.clone()).or_insert(0.0) += w;
            }
        }
        if !any {
            return Err(Error::validation("cannot train a truecaser on an empty corpus"));
        }
        let mut best: BTreeMap<String, (String, f64)> = BTreeMap::new();
        // `counts` iterates in code-point order, so keeping the first
        // maximum yields the lexicographically smallest form on ties.
        for (form, &c) in &counts {
            match best.entry(fold(form)) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert((form.clone(), c));
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    if c > o.get().1 {
                        o.insert((form.clone(), c));
                    }
                }
            }
        }
        Ok(TruecaseModel {
            best_form: best.into_iter().map(|(k, (f, _))| (k, f)).collect(),
            counts,
        })
    }

    pub fn best(&self, token: &str) -> Option<&str> {
        self.best_form.get(&fold(token)).map(String::as_str)
    }

    /// `folded<TAB>best<TAB>count`, sorted by folded form.
    pub fn to_tsv(&self) -> String {
        self.best_form
            .iter()
            .map(|(k, b)| format!("{}\t{}\t{}\n", k, b, self.counts.get(b).copied().unwrap_or(0.0)))
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut m = TruecaseModel::default();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::parse("truecase model", n + 1, "expected 3 tab-separated fields"));
            }
            let c: f64 = f[2]
                .parse()
                .map_err(|_| Error::parse("truecase model", n + 1, format!("bad count {:?}", f[2])))?;
            if fold(f[1]) != f[0] {
                return Err(Error::parse("truecase model", n + 1, "best form does not fold to key"));
            }
            m.best_form.insert(f[0].to_string(), f[1].to_string());
            m.counts.insert(f[1].to_string(), c);
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cli::write_atomic(path.as_ref(), self.to_tsv().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

/// Maps the sentence-initial token to its best form. Only that token can
/// change; tokens unknown to the model pass through.
pub fn truecase(sentence: &TokenizedSentence, model: &TruecaseModel) -> TokenizedSentence {
    let mut out = sentence.clone();
    out.was_truecased = false;
    if let Some(first) = out.tokens.first_mut() {
        if let Some(best) = model.best(first) {
            if best != first.as_str() {
                out.was_truecased = *first == capitalize(best);
                *first = best.to_string();
            }
        }
    }
    out
}

/// Restores sentence-initial capitalization removed by [`truecase`].
pub fn recase(sentence: &TokenizedSentence, model: &TruecaseModel) -> TokenizedSentence {
    let mut out = sentence.clone();
    if out.was_truecased {
        if let Some(first) = out.tokens.first_mut() {
            if model.best(first).is_some() {
                *first = capitalize(first);
            }
        }
    }
    out.was_truecased = false;
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningRules {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub max_length_ratio: f64,
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            min_tokens: 1,
            max_tokens: 80,
            max_length_ratio: 9.0,
        }
    }
}

impl CleaningRules {
    pub fn validate(&self) -> Result<()> {
        if self.min_tokens < 1 || self.min_tokens > self.max_tokens {
            return Err(Error::validation(format!(
                "cleaning rules need 1 <= min_tokens ({}) <= max_tokens ({})",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }

    /// Why a pair of token counts would be rejected, if at all.
    pub fn verdict(&self, src_tokens: usize, tgt_tokens: usize) -> Option<CleanReason> {
        let (lo, hi) = (src_tokens.min(tgt_tokens), src_tokens.max(tgt_tokens));
        if lo == 0 {
            Some(CleanReason::Empty)
        } else if lo < self.min_tokens {
            Some(CleanReason::TooShort)
        } else if hi > self.max_tokens {
            Some(CleanReason::TooLong)
        } else if hi as f64 / lo as f64 > self.max_length_ratio {
            Some(CleanReason::Ratio)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CleanReason {
    Empty,
    TooShort,
    TooLong,
    Ratio,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub empty: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub ratio: usize,
}

impl CleaningReport {
    pub fn total(&self) -> usize {
        self.empty + self.too_short + self.too_long + self.ratio
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    fn record(&mut self, reason: CleanReason) {
        match reason {
            CleanReason::Empty => self.empty += 1,
            CleanReason::TooShort => self.too_short += 1,
            CleanReason::TooLong => self.too_long += 1,
            CleanReason::Ratio => self.ratio += 1,
        }
    }
}

/// Drops empty, over-long and length-mismatched pairs from a tokenized
/// corpus (tokens separated by whitespace).
pub fn clean_pairs(corpus: &ParallelCorpus, rules: &CleaningRules) -> (ParallelCorpus, CleaningReport) {
    let mut report = CleaningReport::default();
    let brochures = corpus
        .brochures
        .iter()
        .map(|b| Brochure {
            pairs: b
                .pairs
                .iter()
                .filter(|p| {
                    let v = rules.verdict(p.source.split_whitespace().count(), p.target.split_whitespace().count());
                    if let Some(r) = v {
                        report.record(r);
                    }
                    v.is_none()
                })
                .cloned()
                .collect(),
            ..b.clone()
        })
        .filter(|b| !b.pairs.is_empty())
        .collect();
    let mut out = ParallelCorpus::new(brochures);
    out.variant_tag = corpus.variant_tag;
    out.rng_seed = corpus.rng_seed;
    out.restamp();
    (out, report)
}

/// A sentence pair after tokenization.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl TokenizedPair {
    pub fn new(source: Vec<String>, target: Vec<String>) -> Self {
        TokenizedPair { source, target }
    }

    /// Builds a pair from whitespace-separated strings.
    pub fn from_strs(source: &str, target: &str) -> Self {
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect();
        TokenizedPair::new(split(source), split(target))
    }
}
