//! IBM Model 1 word alignment trained by expectation maximization, Viterbi
//! link extraction and bidirectional symmetrization.
//!
//! A table always conditions on one side (written `e`) and generates the
//! other (`f`). For [`Direction::SrcToTgt`] `e` is the source sentence;
//! for [`Direction::TgtToSrc`] the roles swap.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::textprep::TokenizedPair;
use crate::{Error, Result};

pub const NULL_ID: u32 = 0;
/// How the NULL word is written in table files.
pub const NULL_TOKEN: &str = "NULL";

/// Dense token ids with id 0 reserved for the NULL word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocabIndex {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Default for VocabIndex {
    fn default() -> Self {
        VocabIndex {
            ids: HashMap::new(),
            tokens: vec![NULL_TOKEN.to_string()],
        }
    }
}

impl VocabIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    /// Id of a real token; never returns [`NULL_ID`].
    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Number of ids including NULL.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    SrcToTgt,
    TgtToSrc,
}

impl Direction {
    /// (conditioning side, generated side) of a pair in this direction.
    pub fn orient<'a>(self, pair: &'a TokenizedPair) -> (&'a [String], &'a [String]) {
        match self {
            Direction::SrcToTgt => (&pair.source, &pair.target),
            Direction::TgtToSrc => (&pair.target, &pair.source),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EMConfig {
    pub iterations: usize,
    pub min_prob_floor: f64,
    /// Stop early once the relative log-likelihood change drops below this.
    pub convergence_epsilon: f64,
}

impl Default for EMConfig {
    fn default() -> Self {
        EMConfig {
            iterations: 5,
            min_prob_floor: 1e-12,
            convergence_epsilon: 1e-4,
        }
    }
}

/// Sparse lexical translation probabilities `t(f|e)`.
///
/// Rows are indexed by `e` id (row 0 is NULL) and hold `(f id, prob)` sorted
/// by `f` id.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationTable {
    pub direction: Direction,
    pub e_vocab: VocabIndex,
    pub f_vocab: VocabIndex,
    rows: Vec<Vec<(u32, f64)>>,
}

impl TranslationTable {
    pub fn prob_ids(&self, e: u32, f: u32) -> f64 {
        let row = match self.rows.get(e as usize) {
            Some(r) => r,
            None => return 0.0,
        };
        match row.binary_search_by_key(&f, |&(k, _)| k) {
            Ok(i) => row[i].1,
            Err(_) => 0.0,
        }
    }

    /// `t(f|e)`; zero for unknown tokens or unseen combinations.
    pub fn prob(&self, e: &str, f: &str) -> f64 {
        match (self.e_vocab.get(e), self.f_vocab.get(f)) {
            (Some(e), Some(f)) => self.prob_ids(e, f),
            _ => 0.0,
        }
    }

    /// `t(f|NULL)`.
    pub fn null_prob(&self, f: &str) -> f64 {
        self.f_vocab.get(f).map_or(0.0, |f| self.prob_ids(NULL_ID, f))
    }

    /// Iterates `(e id, row)` for every non-empty row.
    pub fn rows(&self) -> impl Iterator<Item = (u32, &[(u32, f64)])> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_empty())
            .map(|(e, r)| (e as u32, r.as_slice()))
    }

    pub fn num_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `e<TAB>f<TAB>prob`, sorted by `e` then descending probability.
    pub fn to_tsv(&self) -> String {
        let mut lines: Vec<(&str, f64, &str)> = Vec::with_capacity(self.num_entries());
        for (e, row) in self.rows() {
            for &(f, p) in row {
                lines.push((self.e_vocab.token(e), p, self.f_vocab.token(f)));
            }
        }
        lines.sort_by(|a, b| a.0.cmp(b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(b.2)));
        lines.into_iter().map(|(e, p, f)| format!("{e}\t{f}\t{p}\n")).collect()
    }

    pub fn from_tsv(text: &str, direction: Direction) -> Result<Self> {
        let (mut ev, mut fv) = (VocabIndex::new(), VocabIndex::new());
        let mut entries: Vec<(u32, u32, f64)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse("translation table", n + 1, "expected 3 tab-separated fields"));
            }
            let p: f64 = cols[2]
                .parse()
                .map_err(|_| Error::parse("translation table", n + 1, format!("bad probability {:?}", cols[2])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse("translation table", n + 1, "probability outside [0,1]"));
            }
            let e = if cols[0] == NULL_TOKEN { NULL_ID } else { ev.intern(cols[0]) };
            entries.push((e, fv.intern(cols[1]), p));
        }
        let mut rows = vec![Vec::new(); ev.len()];
        for (e, f, p) in entries {
            rows[e as usize].push((f, p));
        }
        for r in &mut rows {
            r.sort_by_key(|&(f, _)| f);
            r.dedup_by_key(|&mut (f, _)| f);
        }
        Ok(TranslationTable {
            direction,
            e_vocab: ev,
            f_vocab: fv,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cli::write_atomic(path.as_ref(), self.to_tsv().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>, direction: Direction) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, direction)
    }
}

/// Result of EM training.
#[derive(Clone, Debug)]
pub struct Ibm1Model {
    pub table: TranslationTable,
    /// Corpus log-likelihood (natural log) evaluated in each iteration's
    /// E-step, i.e. under the parameters entering that iteration.
    pub log_likelihood: Vec<f64>,
}

struct Encoded {
    /// Per sentence: flat entry index for every (j, i) with i = 0 the NULL word.
    cells: Vec<Vec<u32>>,
    /// (|e| + 1) per sentence.
    widths: Vec<usize>,
}

/// Fixed number of E-step work units; the merge order only depends on it,
/// not on the thread count.
const EM_CHUNKS: usize = 16;

/// Trains IBM Model 1 from uniform initialization.
pub fn train_ibm1(corpus: &[TokenizedPair], config: &EMConfig, direction: Direction) -> Result<Ibm1Model> {
    if corpus.is_empty() {
        return Err(Error::validation("cannot train IBM Model 1 on an empty corpus"));
    }
    if config.iterations < 1 {
        return Err(Error::validation("EM needs at least one iteration"));
    }
    let (mut ev, mut fv) = (VocabIndex::new(), VocabIndex::new());
    let sentences: Vec<(Vec<u32>, Vec<u32>)> = corpus
        .iter()
        .map(|p| {
            let (e, f) = direction.orient(p);
            let mut es = vec![NULL_ID];
            es.extend(e.iter().map(|t| ev.intern(t)));
            (es, f.iter().map(|t| fv.intern(t)).collect())
        })
        .collect();

    let mut support: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); ev.len()];
    for (es, fs) in &sentences {
        for &e in es {
            support[e as usize].extend(fs.iter().copied());
        }
    }
    let rows_f: Vec<Vec<u32>> = support.into_iter().map(|s| s.into_iter().collect()).collect();
    let mut offsets = Vec::with_capacity(rows_f.len() + 1);
    let mut total = 0usize;
    for r in &rows_f {
        offsets.push(total);
        total += r.len();
    }
    offsets.push(total);

    let enc = Encoded {
        cells: sentences
            .iter()
            .map(|(es, fs)| {
                let mut v = Vec::with_capacity(es.len() * fs.len());
                for &f in fs {
                    for &e in es {
                        let row = &rows_f[e as usize];
                        let k = row.binary_search(&f).expect("f co-occurs with e");
                        v.push((offsets[e as usize] + k) as u32);
                    }
                }
                v
            })
            .collect(),
        widths: sentences.iter().map(|(es, _)| es.len()).collect(),
    };

    let n_f = (fv.len() - 1).max(1);
    let mut t = vec![1.0 / n_f as f64; total];
    let mut trace = Vec::with_capacity(config.iterations);
    let chunk = corpus.len().div_ceil(EM_CHUNKS).max(1);
    let idx: Vec<usize> = (0..corpus.len()).collect();

    for _ in 0..config.iterations {
        let partial: Vec<(Vec<f64>, f64)> = idx
            .par_chunks(chunk)
            .map(|ids| {
                let mut counts = vec![0.0; total];
                let mut ll = 0.0;
                for &s in ids {
                    let w = enc.widths[s];
                    for cell in enc.cells[s].chunks(w) {
                        let denom: f64 = cell.iter().map(|&c| t[c as usize]).sum();
                        ll += (denom / w as f64).ln();
                        for &c in cell {
                            counts[c as usize] += t[c as usize] / denom;
                        }
                    }
                }
                (counts, ll)
            })
            .collect();
        let mut counts = vec![0.0; total];
        let mut ll = 0.0;
        for (c, l) in partial {
            for (a, b) in counts.iter_mut().zip(c) {
                *a += b;
            }
            ll += l;
        }
        trace.push(ll);

        for e in 0..rows_f.len() {
            let span = offsets[e]..offsets[e + 1];
            let z: f64 = counts[span.clone()].iter().sum();
            if z <= 0.0 {
                continue;
            }
            for k in span.clone() {
                t[k] = (counts[k] / z).max(config.min_prob_floor);
            }
            let z2: f64 = t[span.clone()].iter().sum();
            for k in span {
                t[k] /= z2;
            }
        }

        if let [.., prev, last] = trace.as_slice() {
            if ((last - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < config.convergence_epsilon {
                break;
            }
        }
    }

    let rows = rows_f
        .iter()
        .enumerate()
        .map(|(e, fs)| fs.iter().enumerate().map(|(k, &f)| (f, t[offsets[e] + k])).collect())
        .collect();
    Ok(Ibm1Model {
        table: TranslationTable {
            direction,
            e_vocab: ev,
            f_vocab: fv,
            rows,
        },
        log_likelihood: trace,
    })
}

/// Word links of one sentence pair; `(i, j)` links position `i` of the
/// first side to position `j` of the second.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    pub links: BTreeSet<(usize, usize)>,
    pub src_len: usize,
    pub tgt_len: usize,
}

impl AlignmentMatrix {
    pub fn new(src_len: usize, tgt_len: usize) -> Self {
        AlignmentMatrix {
            links: BTreeSet::new(),
            src_len,
            tgt_len,
        }
    }

    pub fn from_links(src_len: usize, tgt_len: usize, links: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = Self::new(src_len, tgt_len);
        for (i, j) in links {
            if i >= src_len || j >= tgt_len {
                return Err(Error::validation(format!("link {i}-{j} outside {src_len}x{tgt_len}")));
            }
            m.links.insert((i, j));
        }
        Ok(m)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    pub fn transpose(&self) -> Self {
        AlignmentMatrix {
            links: self.links.iter().map(|&(i, j)| (j, i)).collect(),
            src_len: self.tgt_len,
            tgt_len: self.src_len,
        }
    }

    /// Parses the `i-j i-j ...` interchange form.
    pub fn parse(line: &str, src_len: usize, tgt_len: usize) -> Result<Self> {
        let mut links = Vec::new();
        for tok in line.split_whitespace() {
            let (a, b) = tok
                .split_once('-')
                .ok_or_else(|| Error::validation(format!("bad alignment link {tok:?}")))?;
            let i = a.parse().map_err(|_| Error::validation(format!("bad alignment link {tok:?}")))?;
            let j = b.parse().map_err(|_| Error::validation(format!("bad alignment link {tok:?}")))?;
            links.push((i, j));
        }
        Self::from_links(src_len, tgt_len, links)
    }
}

impl fmt::Display for AlignmentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, j) in &self.links {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{i}-{j}")?;
            first = false;
        }
        Ok(())
    }
}

/// Links every generated word to its most probable conditioning word.
///
/// The result is in the table's orientation: rows are positions of the
/// conditioning side. A word stays unlinked when NULL is strictly more
/// probable than every real word, or when no real word gives it mass.
/// Model 1 ignores position, so repeated words tie exactly; ties go to the
/// position closest to the diagonal, then to the smaller one.
pub fn viterbi_align(pair: &TokenizedPair, table: &TranslationTable) -> AlignmentMatrix {
    let (e, f) = table.direction.orient(pair);
    let e_ids: Vec<Option<u32>> = e.iter().map(|t| table.e_vocab.get(t)).collect();
    let (ne, nf) = (e.len(), f.len());
    // doubled distance between the centres of positions i and j, both
    // scaled to a common length
    let off_diagonal = |i: usize, j: usize| ((2 * i + 1) * nf).abs_diff((2 * j + 1) * ne);
    let mut m = AlignmentMatrix::new(ne, nf);
    for (j, ft) in f.iter().enumerate() {
        let Some(fid) = table.f_vocab.get(ft) else { continue };
        let null = table.prob_ids(NULL_ID, fid);
        let mut best: Option<(usize, f64)> = None;
        for (i, eid) in e_ids.iter().enumerate() {
            let p = eid.map_or(0.0, |id| table.prob_ids(id, fid));
            let better = match best {
                None => true,
                Some((bi, b)) => p > b || (p == b && off_diagonal(i, j) < off_diagonal(bi, j)),
            };
            if better {
                best = Some((i, p));
            }
        }
        if let Some((i, p)) = best {
            if p > 0.0 && p >= null {
                m.links.insert((i, j));
            }
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    Intersection,
    Union,
    GrowDiagFinalAnd,
}

impl std::str::FromStr for Heuristic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intersection" => Ok(Heuristic::Intersection),
            "union" => Ok(Heuristic::Union),
            "grow-diag-final-and" => Ok(Heuristic::GrowDiagFinalAnd),
            _ => Err(Error::validation(format!("unknown symmetrization heuristic {s:?}"))),
        }
    }
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Combines a source-to-target alignment with a target-to-source one
/// (given in its own orientation, transposed here).
pub fn symmetrize(forward: &AlignmentMatrix, backward: &AlignmentMatrix, heuristic: Heuristic) -> Result<AlignmentMatrix> {
    let backward = backward.transpose();
    if (forward.src_len, forward.tgt_len) != (backward.src_len, backward.tgt_len) {
        return Err(Error::validation(format!(
            "alignment dimensions disagree: {}x{} vs {}x{}",
            forward.src_len, forward.tgt_len, backward.src_len, backward.tgt_len
        )));
    }
    let (n, m) = (forward.src_len, forward.tgt_len);
    let inter: BTreeSet<_> = forward.links.intersection(&backward.links).copied().collect();
    let union: BTreeSet<_> = forward.links.union(&backward.links).copied().collect();
    let links = match heuristic {
        Heuristic::Intersection => inter,
        Heuristic::Union => union,
        Heuristic::GrowDiagFinalAnd => {
            let mut a = inter;
            let mut src_aligned = vec![false; n];
            let mut tgt_aligned = vec![false; m];
            for &(i, j) in &a {
                src_aligned[i] = true;
                tgt_aligned[j] = true;
            }
            // grow-diag
            loop {
                let mut added = false;
                for i in 0..n {
                    for j in 0..m {
                        if !a.contains(&(i, j)) {
                            continue;
                        }
                        for (di, dj) in NEIGHBORS {
                            let (ni, nj) = (i as isize + di, j as isize + dj);
                            if ni < 0 || nj < 0 || ni as usize >= n || nj as usize >= m {
                                continue;
                            }
                            let (ni, nj) = (ni as usize, nj as usize);
                            if (!src_aligned[ni] || !tgt_aligned[nj]) && union.contains(&(ni, nj)) && a.insert((ni, nj)) {
                                src_aligned[ni] = true;
                                tgt_aligned[nj] = true;
                                added = true;
                            }
                        }
                    }
                }
                if !added {
                    break;
                }
            }
            // final-and, forward then backward
            for side in [&forward.links, &backward.links] {
                for i in 0..n {
                    for j in 0..m {
                        if !src_aligned[i] && !tgt_aligned[j] && side.contains(&(i, j)) {
                            a.insert((i, j));
                            src_aligned[i] = true;
                            tgt_aligned[j] = true;
                        }
                    }
                }
            }
            a
        }
    };
    Ok(AlignmentMatrix {
        links,
        src_len: n,
        tgt_len: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(s: &str, t: &str) -> TokenizedPair {
        TokenizedPair::from_strs(s, t)
    }

    #[test]
    fn vocab_reserves_null() {
        let mut v = VocabIndex::new();
        assert_eq!(v.intern(NULL_TOKEN), 1);
        assert_eq!(v.get("x"), None);
        assert_eq!(v.intern("x"), 2);
        assert_eq!(v.token(0), NULL_TOKEN);
    }

    #[test]
    fn single_pair_fixed_point() {
        // E-step: y splits its mass evenly between x and NULL; each row has
        // a single entry, so both normalize to 1. With t = 1 everywhere,
        // P(y|x) = 1/2 * (1 + 1) = 1.
        let m = train_ibm1(&[pair("x", "y")], &EMConfig::default(), Direction::SrcToTgt).unwrap();
        assert!((m.table.prob("x", "y") - 1.0).abs() < 1e-12);
        assert!((m.table.null_prob("y") - 1.0).abs() < 1e-12);
        assert!(m.log_likelihood[0].abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(train_ibm1(&[], &EMConfig::default(), Direction::SrcToTgt).is_err());
    }

    #[test]
    fn viterbi_rules() {
        let t = TranslationTable::from_tsv("x\ty\t1\nNULL\ty\t0.5\n", Direction::SrcToTgt).unwrap();
        assert_eq!(viterbi_align(&pair("x", "y"), &t).to_string(), "0-0");

        let t = TranslationTable::from_tsv("x\ty\t0.2\nNULL\ty\t0.9\n", Direction::SrcToTgt).unwrap();
        assert!(viterbi_align(&pair("x", "y"), &t).links.is_empty());

        let t = TranslationTable::from_tsv("a\ty\t0.4\nb\ty\t0.4\nNULL\ty\t0.1\n", Direction::SrcToTgt).unwrap();
        // tie between positions 0 and 1: the diagonal one wins
        assert_eq!(viterbi_align(&pair("a b", "u y"), &t).to_string(), "1-1");
        assert_eq!(viterbi_align(&pair("a b", "y u"), &t).to_string(), "0-0");
    }

    #[test]
    fn repeated_words_align_along_the_diagonal() {
        let t = TranslationTable::from_tsv("a\tx\t0.9\nb\tz\t0.9\nNULL\tx\t0.1\n", Direction::SrcToTgt).unwrap();
        assert_eq!(viterbi_align(&pair("a a b", "x x z"), &t).to_string(), "0-0 1-1 2-2");
        assert_eq!(viterbi_align(&pair("a b a", "x z x"), &t).to_string(), "0-0 1-1 2-2");
    }

    #[test]
    fn backward_alignment_is_in_own_orientation() {
        let t = TranslationTable::from_tsv("y\tx\t1\n", Direction::TgtToSrc).unwrap();
        let m = viterbi_align(&pair("z x", "y"), &t);
        assert_eq!((m.src_len, m.tgt_len), (1, 2));
        assert_eq!(m.to_string(), "0-1");
    }

    #[test]
    fn symmetrize_set_algebra() {
        let fwd = AlignmentMatrix::from_links(2, 1, [(0, 0)]).unwrap();
        let bwd = AlignmentMatrix::from_links(1, 2, [(0, 1)]).unwrap();
        assert!(symmetrize(&fwd, &bwd, Heuristic::Intersection).unwrap().links.is_empty());
        assert_eq!(symmetrize(&fwd, &bwd, Heuristic::Union).unwrap().to_string(), "0-0 1-0");
    }

    #[test]
    fn symmetrize_identical_inputs() {
        let fwd = AlignmentMatrix::from_links(3, 3, [(0, 0), (1, 2), (2, 1)]).unwrap();
        for h in [Heuristic::Intersection, Heuristic::Union, Heuristic::GrowDiagFinalAnd] {
            assert_eq!(symmetrize(&fwd, &fwd.transpose(), h).unwrap(), fwd);
        }
    }

    #[test]
    fn symmetrize_dimension_mismatch() {
        let fwd = AlignmentMatrix::new(2, 3);
        let bwd = AlignmentMatrix::new(2, 3);
        assert!(symmetrize(&fwd, &bwd, Heuristic::Union).is_err());
    }

    #[test]
    fn table_tsv_roundtrip() {
        let corpus = [pair("das haus", "the house"), pair("das buch", "the book")];
        let m = train_ibm1(&corpus, &EMConfig::default(), Direction::SrcToTgt).unwrap();
        let text = m.table.to_tsv();
        let back = TranslationTable::from_tsv(&text, Direction::SrcToTgt).unwrap();
        assert_eq!(back.to_tsv(), text);
        assert_eq!(back.prob("das", "the"), m.table.prob("das", "the"));
    }

    #[test]
    fn alignment_text_form() {
        let m = AlignmentMatrix::parse("0-0 2-1", 3, 2).unwrap();
        assert_eq!(m.to_string(), "0-0 2-1");
        assert!(AlignmentMatrix::parse("3-0", 3, 2).is_err());
    }
}
