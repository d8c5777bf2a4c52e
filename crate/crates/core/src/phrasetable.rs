//! Phrase-pair extraction from word-aligned sentence pairs and phrase table
//! scoring with the four standard features.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numfmt;
use crate::textprep::TokenizedPair;
use crate::wordalign::{AlignmentMatrix, TranslationTable};
use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 7;
/// Lower bound for lexical weights so every feature stays in (0, 1].
pub const LEX_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhrasePair {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

/// One extracted occurrence: half-open token spans on both sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhraseSpan {
    pub src_start: usize,
    pub src_end: usize,
    pub tgt_start: usize,
    pub tgt_end: usize,
}

impl PhraseSpan {
    pub fn phrase(&self, pair: &TokenizedPair) -> PhrasePair {
        PhrasePair {
            src: pair.source[self.src_start..self.src_end].to_vec(),
            tgt: pair.target[self.tgt_start..self.tgt_end].to_vec(),
        }
    }
}

/// Every span pair consistent with `alignment`, both sides at most
/// `max_len` tokens, ordered by (src start, src end, tgt start, tgt end).
///
/// A span pair is consistent when it contains at least one link and no
/// link connects a word inside one span to a word outside the other.
/// Unaligned target words at the boundary may be absorbed.
pub fn extract_phrases(pair: &TokenizedPair, alignment: &AlignmentMatrix, max_len: usize) -> Vec<PhraseSpan> {
    let (ns, nt) = (pair.source.len(), pair.target.len());
    debug_assert_eq!((alignment.src_len, alignment.tgt_len), (ns, nt));
    let mut tgt_aligned = vec![false; nt];
    let mut src_links: Vec<Vec<usize>> = vec![Vec::new(); ns];
    for &(i, j) in &alignment.links {
        tgt_aligned[j] = true;
        src_links[i].push(j);
    }
    let mut out = Vec::new();
    for s1 in 0..ns {
        let (mut tmin, mut tmax) = (usize::MAX, 0);
        for s2 in s1..ns.min(s1 + max_len) {
            for &j in &src_links[s2] {
                tmin = tmin.min(j);
                tmax = tmax.max(j);
            }
            if tmin == usize::MAX || tmax - tmin + 1 > max_len {
                continue;
            }
            let crosses = alignment
                .links
                .iter()
                .any(|&(i, j)| (i < s1 || i > s2) && (tmin..=tmax).contains(&j));
            if crosses {
                continue;
            }
            let mut ts = tmin;
            loop {
                let mut te = tmax;
                while te - ts < max_len {
                    out.push(PhraseSpan {
                        src_start: s1,
                        src_end: s2 + 1,
                        tgt_start: ts,
                        tgt_end: te + 1,
                    });
                    if te + 1 < nt && !tgt_aligned[te + 1] {
                        te += 1;
                    } else {
                        break;
                    }
                }
                if ts > 0 && !tgt_aligned[ts - 1] && tmax - (ts - 1) < max_len {
                    ts -= 1;
                } else {
                    break;
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Word-level tables used for the lexical weights: `forward` holds
/// `t(tgt|src)`, `backward` holds `t(src|tgt)`.
#[derive(Clone, Copy, Debug)]
pub struct LexicalTables<'a> {
    pub forward: &'a TranslationTable,
    pub backward: &'a TranslationTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseEntry {
    pub tgt: Vec<String>,
    pub phi_tgt_given_src: f64,
    pub phi_src_given_tgt: f64,
    pub lex_tgt_given_src: f64,
    pub lex_src_given_tgt: f64,
}

impl PhraseEntry {
    pub fn features(&self) -> [f64; 4] {
        [
            self.phi_tgt_given_src,
            self.phi_src_given_tgt,
            self.lex_tgt_given_src,
            self.lex_src_given_tgt,
        ]
    }
}

/// Scored phrase pairs indexed by source phrase; entries of one source
/// phrase are sorted by target phrase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhraseTable {
    entries: BTreeMap<Vec<String>, Vec<PhraseEntry>>,
    pub max_len: usize,
    src_words: HashSet<String>,
}

impl PhraseTable {
    pub fn from_entries(entries: BTreeMap<Vec<String>, Vec<PhraseEntry>>, max_len: usize) -> Self {
        let src_words = entries.keys().flatten().cloned().collect();
        let mut entries = entries;
        for v in entries.values_mut() {
            v.sort_by(|a, b| a.tgt.cmp(&b.tgt));
        }
        PhraseTable {
            entries,
            max_len,
            src_words,
        }
    }

    pub fn get(&self, src: &[String]) -> &[PhraseEntry] {
        self.entries.get(src).map_or(&[], Vec::as_slice)
    }

    /// Whether any entry's source side mentions `word`.
    pub fn knows_source_word(&self, word: &str) -> bool {
        self.src_words.contains(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<String>, &Vec<PhraseEntry>)> {
        self.entries.iter()
    }

    pub fn num_sources(&self) -> usize {
        self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `src ||| tgt ||| phi(t|s) lex(t|s) phi(s|t) lex(s|t)` per line,
    /// features with 6 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (src, list) in &self.entries {
            let s = src.join(" ");
            for e in list {
                out.push_str(&format!(
                    "{} ||| {} ||| {} {} {} {}\n",
                    s,
                    e.tgt.join(" "),
                    numfmt::sig(e.phi_tgt_given_src, 6),
                    numfmt::sig(e.lex_tgt_given_src, 6),
                    numfmt::sig(e.phi_src_given_tgt, 6),
                    numfmt::sig(e.lex_src_given_tgt, 6)
                ));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<Vec<String>, Vec<PhraseEntry>> = BTreeMap::new();
        let mut max_len = 0;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| Error::parse("phrase table", n + 1, m.to_string());
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() < 3 {
                return Err(bad("expected `src ||| tgt ||| features`"));
            }
            let src: Vec<String> = fields[0].split_whitespace().map(str::to_string).collect();
            let tgt: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
            if src.is_empty() || tgt.is_empty() {
                return Err(bad("empty phrase"));
            }
            let feats: Vec<f64> = fields[2]
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|_| bad(&format!("bad feature {f:?}"))))
                .collect::<Result<_>>()?;
            if feats.len() != 4 {
                return Err(bad(&format!("expected 4 features, found {}", feats.len())));
            }
            if feats.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
                return Err(bad("feature outside (0, 1]"));
            }
            max_len = max_len.max(src.len()).max(tgt.len());
            entries.entry(src).or_default().push(PhraseEntry {
                tgt,
                phi_tgt_given_src: feats[0],
                lex_tgt_given_src: feats[1],
                phi_src_given_tgt: feats[2],
                lex_src_given_tgt: feats[3],
            });
        }
        Ok(Self::from_entries(entries, max_len))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cli::write_atomic(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Lexical weight of `tgt[t]` given `src[s]` under the links between them:
/// each target word averages its aligned source words, unaligned target
/// words use the NULL probability.
fn lexical_weight(
    pair: &TokenizedPair,
    span: &PhraseSpan,
    alignment: &AlignmentMatrix,
    table: &TranslationTable,
    reverse: bool,
) -> f64 {
    let (given, gen, g_range, t_range) = if reverse {
        (&pair.target, &pair.source, span.tgt_start..span.tgt_end, span.src_start..span.src_end)
    } else {
        (&pair.source, &pair.target, span.src_start..span.src_end, span.tgt_start..span.tgt_end)
    };
    let mut w = 1.0;
    for j in t_range {
        let mut sum = 0.0;
        let mut n = 0;
        for i in g_range.clone() {
            let linked = if reverse { alignment.contains(j, i) } else { alignment.contains(i, j) };
            if linked {
                sum += table.prob(&given[i], &gen[j]);
                n += 1;
            }
        }
        w *= if n == 0 { table.null_prob(&gen[j]) } else { sum / n as f64 };
    }
    w.max(LEX_FLOOR)
}

#[derive(Default)]
struct PairStats {
    count: u64,
    lex_fwd: f64,
    lex_bwd: f64,
}

/// Extracts phrases from every aligned pair and scores them.
///
/// `phi(t|s) = c(s,t)/c(s)`, `phi(s|t) = c(s,t)/c(t)`, each occurrence
/// counting once; lexical weights take the maximum over occurrences.
pub fn build_table(
    corpus: &[TokenizedPair],
    alignments: &[AlignmentMatrix],
    lex: LexicalTables<'_>,
    max_len: usize,
) -> Result<PhraseTable> {
    if corpus.len() != alignments.len() {
        return Err(Error::validation(format!(
            "{} sentence pairs but {} alignments",
            corpus.len(),
            alignments.len()
        )));
    }
    for (k, (p, a)) in corpus.iter().zip(alignments).enumerate() {
        if (p.source.len(), p.target.len()) != (a.src_len, a.tgt_len) {
            return Err(Error::validation(format!("alignment {k} does not match its sentence pair")));
        }
    }
    let per_sentence: Vec<Vec<(PhrasePair, f64, f64)>> = corpus
        .par_iter()
        .zip(alignments.par_iter())
        .map(|(pair, a)| {
            extract_phrases(pair, a, max_len)
                .into_iter()
                .map(|span| {
                    (
                        span.phrase(pair),
                        lexical_weight(pair, &span, a, lex.forward, false),
                        lexical_weight(pair, &span, a, lex.backward, true),
                    )
                })
                .collect()
        })
        .collect();

    let mut stats: HashMap<PhrasePair, PairStats> = HashMap::new();
    for (pp, lf, lb) in per_sentence.into_iter().flatten() {
        let s = stats.entry(pp).or_default();
        s.count += 1;
        s.lex_fwd = s.lex_fwd.max(lf);
        s.lex_bwd = s.lex_bwd.max(lb);
    }
    let mut src_total: HashMap<&[String], u64> = HashMap::new();
    let mut tgt_total: HashMap<&[String], u64> = HashMap::new();
    for (pp, s) in &stats {
        *src_total.entry(&pp.src).or_default() += s.count;
        *tgt_total.entry(&pp.tgt).or_default() += s.count;
    }
    let mut entries: BTreeMap<Vec<String>, Vec<PhraseEntry>> = BTreeMap::new();
    for (pp, s) in &stats {
        let c = s.count as f64;
        entries.entry(pp.src.clone()).or_default().push(PhraseEntry {
            tgt: pp.tgt.clone(),
            phi_tgt_given_src: c / src_total[pp.src.as_slice()] as f64,
            phi_src_given_tgt: c / tgt_total[pp.tgt.as_slice()] as f64,
            lex_tgt_given_src: s.lex_fwd,
            lex_src_given_tgt: s.lex_bwd,
        });
    }
    Ok(PhraseTable::from_entries(entries, max_len))
}
