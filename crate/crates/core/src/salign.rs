//! Length-based (Gale-Church) sentence alignment with manual bead edits
//! and export to TMX, brochure XML and line-aligned plain text.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{to_brochure_xml, Brochure, ParallelCorpus};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SegmentedDocument {
    pub sentences: Vec<String>,
    /// Character (not byte) count per sentence.
    pub lengths: Vec<usize>,
}

impl SegmentedDocument {
    pub fn from_sentences<S: Into<String>>(sentences: impl IntoIterator<Item = S>) -> Self {
        let sentences: Vec<String> = sentences.into_iter().map(Into::into).collect();
        let lengths = sentences.iter().map(|s| s.chars().count()).collect();
        SegmentedDocument { sentences, lengths }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '؟')
}

/// Splits each line after sentence-final punctuation followed by
/// whitespace. Blank lines are dropped.
pub fn segment(text: &str) -> SegmentedDocument {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let mut chars = line.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if is_terminator(c) {
                if let Some(&(j, next)) = chars.peek() {
                    if next.is_whitespace() {
                        let s = line[start..i + c.len_utf8()].trim();
                        if !s.is_empty() {
                            out.push(s.to_string());
                        }
                        start = j;
                    }
                }
            }
        }
        let rest = line[start..].trim();
        if !rest.is_empty() {
            out.push(rest.to_string());
        }
    }
    SegmentedDocument::from_sentences(out)
}

/// (source sentences, target sentences) of a bead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BeadKind {
    #[serde(rename = "0-1")]
    Insertion,
    #[serde(rename = "1-0")]
    Deletion,
    #[serde(rename = "1-1")]
    OneOne,
    #[serde(rename = "1-2")]
    OneTwo,
    #[serde(rename = "2-1")]
    TwoOne,
    #[serde(rename = "2-2")]
    TwoTwo,
}

impl BeadKind {
    pub const ALL: [BeadKind; 6] = [
        BeadKind::Insertion,
        BeadKind::Deletion,
        BeadKind::OneOne,
        BeadKind::OneTwo,
        BeadKind::TwoOne,
        BeadKind::TwoTwo,
    ];

    /// DP tie-breaking order: 1-1 first, then enumeration order.
    const SEARCH_ORDER: [BeadKind; 6] = [
        BeadKind::OneOne,
        BeadKind::Insertion,
        BeadKind::Deletion,
        BeadKind::OneTwo,
        BeadKind::TwoOne,
        BeadKind::TwoTwo,
    ];

    pub fn sizes(self) -> (usize, usize) {
        match self {
            BeadKind::Insertion => (0, 1),
            BeadKind::Deletion => (1, 0),
            BeadKind::OneOne => (1, 1),
            BeadKind::OneTwo => (1, 2),
            BeadKind::TwoOne => (2, 1),
            BeadKind::TwoTwo => (2, 2),
        }
    }

    pub fn from_sizes(src: usize, tgt: usize) -> Option<Self> {
        BeadKind::ALL.into_iter().find(|k| k.sizes() == (src, tgt))
    }
}

impl fmt::Display for BeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.sizes();
        write!(f, "{a}-{b}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bead {
    pub kind: BeadKind,
    pub src: Range<usize>,
    pub tgt: Range<usize>,
    /// Negative log probability.
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub beads: Vec<Bead>,
    pub total_cost: f64,
}

impl AlignmentResult {
    /// Checks that beads tile both documents in order.
    pub fn validate(&self, src_len: usize, tgt_len: usize) -> Result<()> {
        let (mut s, mut t) = (0, 0);
        for (i, b) in self.beads.iter().enumerate() {
            if b.src.start != s || b.tgt.start != t || (b.src.len(), b.tgt.len()) != b.kind.sizes() {
                return Err(Error::validation(format!("bead {i} breaks contiguity")));
            }
            s = b.src.end;
            t = b.tgt.end;
        }
        if (s, t) != (src_len, tgt_len) {
            return Err(Error::validation("beads do not cover both documents"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignParams {
    /// Expected target characters per source character.
    pub mean_ratio: f64,
    pub variance: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            mean_ratio: 1.0,
            variance: 6.8,
        }
    }
}

fn prior(kind: BeadKind) -> f64 {
    match kind {
        BeadKind::OneOne => 0.89,
        BeadKind::Insertion | BeadKind::Deletion => 0.0099,
        BeadKind::OneTwo | BeadKind::TwoOne => 0.089,
        BeadKind::TwoTwo => 0.011,
    }
}

/// ln P(Z > x) for a standard normal.
fn ln_normal_sf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let v = libm::erfc(z);
    if v > 1e-300 {
        (0.5 * v).ln()
    } else {
        // asymptotic expansion of erfc for large z
        let z2 = z * z;
        -z2 - (z * std::f64::consts::PI.sqrt()).ln() + (1.0 - 0.5 / z2).ln() + 0.5f64.ln()
    }
}

/// Cost of aligning `src_chars` with `tgt_chars` in a bead of `kind`:
/// `-ln(2 P(Z > |δ|)) - ln prior`, `δ = (l_s c - l_t) / sqrt(m s²)` with
/// `m = (l_s + l_t / c) / 2`.
pub fn bead_cost(kind: BeadKind, src_chars: usize, tgt_chars: usize, params: &AlignParams) -> f64 {
    let (ls, lt) = (src_chars as f64, tgt_chars as f64);
    let m = (ls + lt / params.mean_ratio) / 2.0;
    let delta = if m > 0.0 {
        (ls * params.mean_ratio - lt) / (m * params.variance).sqrt()
    } else {
        0.0
    };
    -(std::f64::consts::LN_2 + ln_normal_sf(delta.abs()) + prior(kind).ln())
}

fn span_chars(doc: &SegmentedDocument, r: &Range<usize>) -> usize {
    doc.lengths[r.clone()].iter().sum()
}

fn make_bead(kind: BeadKind, src: Range<usize>, tgt: Range<usize>, s: &SegmentedDocument, t: &SegmentedDocument, p: &AlignParams) -> Bead {
    let cost = bead_cost(kind, span_chars(s, &src), span_chars(t, &tgt), p);
    Bead { kind, src, tgt, cost }
}

/// Minimum-cost bead sequence by dynamic programming.
pub fn gale_church_align(src: &SegmentedDocument, tgt: &SegmentedDocument, params: &AlignParams) -> AlignmentResult {
    let (n, m) = (src.len(), tgt.len());
    let mut cost = vec![vec![f64::INFINITY; m + 1]; n + 1];
    let mut back: Vec<Vec<Option<BeadKind>>> = vec![vec![None; m + 1]; n + 1];
    cost[0][0] = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            if i == 0 && j == 0 {
                continue;
            }
            for kind in BeadKind::SEARCH_ORDER {
                let (di, dj) = kind.sizes();
                if di > i || dj > j || cost[i - di][j - dj].is_infinite() {
                    continue;
                }
                let c = cost[i - di][j - dj]
                    + bead_cost(kind, span_chars(src, &(i - di..i)), span_chars(tgt, &(j - dj..j)), params);
                if c < cost[i][j] {
                    cost[i][j] = c;
                    back[i][j] = Some(kind);
                }
            }
        }
    }
    let mut beads = Vec::new();
    let (mut i, mut j) = (n, m);
    while let Some(kind) = back[i][j] {
        let (di, dj) = kind.sizes();
        beads.push(make_bead(kind, i - di..i, j - dj..j, src, tgt, params));
        i -= di;
        j -= dj;
    }
    beads.reverse();
    AlignmentResult {
        total_cost: cost[n][m],
        beads,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edit {
    /// Joins bead `i` with bead `i + 1`.
    Merge(usize),
    /// Cuts bead `bead` after `src_at` source and `tgt_at` target sentences.
    Split { bead: usize, src_at: usize, tgt_at: usize },
    /// Moves one sentence on `side` across the boundary between `bead` and
    /// `bead + 1`: forward takes the first sentence of the next bead, backward
    /// hands over the last sentence of this one.
    Shift { bead: usize, side: Side, forward: bool },
}

pub fn apply_edit(
    result: &AlignmentResult,
    edit: Edit,
    src: &SegmentedDocument,
    tgt: &SegmentedDocument,
    params: &AlignParams,
) -> Result<AlignmentResult> {
    let beads = &result.beads;
    let kind_of = |s: &Range<usize>, t: &Range<usize>| {
        BeadKind::from_sizes(s.len(), t.len())
            .ok_or_else(|| Error::validation(format!("a {}-{} bead is not a valid kind", s.len(), t.len())))
    };
    let mut out = beads.clone();
    match edit {
        Edit::Merge(i) => {
            if i + 1 >= beads.len() {
                return Err(Error::validation(format!("cannot merge bead {i} with a successor")));
            }
            let s = beads[i].src.start..beads[i + 1].src.end;
            let t = beads[i].tgt.start..beads[i + 1].tgt.end;
            let k = kind_of(&s, &t)?;
            out.splice(i..i + 2, [make_bead(k, s, t, src, tgt, params)]);
        }
        Edit::Split { bead, src_at, tgt_at } => {
            let b = beads.get(bead).ok_or_else(|| Error::validation(format!("no bead {bead}")))?;
            if src_at > b.src.len() || tgt_at > b.tgt.len() {
                return Err(Error::validation("split point outside the bead"));
            }
            let (s1, s2) = (b.src.start..b.src.start + src_at, b.src.start + src_at..b.src.end);
            let (t1, t2) = (b.tgt.start..b.tgt.start + tgt_at, b.tgt.start + tgt_at..b.tgt.end);
            let (k1, k2) = (kind_of(&s1, &t1)?, kind_of(&s2, &t2)?);
            out.splice(
                bead..bead + 1,
                [make_bead(k1, s1, t1, src, tgt, params), make_bead(k2, s2, t2, src, tgt, params)],
            );
        }
        Edit::Shift { bead, side, forward } => {
            if bead + 1 >= beads.len() {
                return Err(Error::validation(format!("bead {bead} has no successor to shift into")));
            }
            let (mut a, mut b) = (beads[bead].clone(), beads[bead + 1].clone());
            {
                let (ra, rb) = match side {
                    Side::Source => (&mut a.src, &mut b.src),
                    Side::Target => (&mut a.tgt, &mut b.tgt),
                };
                if forward {
                    if rb.start == rb.end {
                        return Err(Error::validation("next bead has no sentence to give"));
                    }
                    ra.end += 1;
                    rb.start += 1;
                } else {
                    if ra.start == ra.end {
                        return Err(Error::validation("bead has no sentence to give"));
                    }
                    ra.end -= 1;
                    rb.start -= 1;
                }
            }
            let (ka, kb) = (kind_of(&a.src, &a.tgt)?, kind_of(&b.src, &b.tgt)?);
            out[bead] = make_bead(ka, a.src, a.tgt, src, tgt, params);
            out[bead + 1] = make_bead(kb, b.src, b.tgt, src, tgt, params);
        }
    }
    let total_cost = out.iter().map(|b| b.cost).sum();
    let r = AlignmentResult { beads: out, total_cost };
    r.validate(src.len(), tgt.len())?;
    Ok(r)
}

fn join(doc: &SegmentedDocument, r: &Range<usize>) -> String {
    doc.sentences[r.clone()].join(" ")
}

/// Bead texts as (source, target) pairs; sentences of a side are joined by
/// a space, a missing side is empty.
pub fn bead_pairs(result: &AlignmentResult, src: &SegmentedDocument, tgt: &SegmentedDocument) -> Vec<(String, String)> {
    result.beads.iter().map(|b| (join(src, &b.src), join(tgt, &b.tgt))).collect()
}

/// Line-aligned plain text; beads with an empty side are dropped.
pub fn to_plaintext(result: &AlignmentResult, src: &SegmentedDocument, tgt: &SegmentedDocument) -> (String, String) {
    let (mut s, mut t) = (String::new(), String::new());
    for (a, b) in bead_pairs(result, src, tgt) {
        if a.is_empty() || b.is_empty() {
            continue;
        }
        s.push_str(&a);
        s.push('\n');
        t.push_str(&b);
        t.push('\n');
    }
    (s, t)
}

pub fn to_tmx(result: &AlignmentResult, src: &SegmentedDocument, tgt: &SegmentedDocument, src_lang: &str, tgt_lang: &str) -> String {
    use crate::corpus::escape;
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<tmx version=\"1.4\">\n");
    out.push_str(&format!(
        "<header creationtool=\"pbsmt\" creationtoolversion=\"{}\" segtype=\"sentence\" o-tmf=\"plain\" adminlang=\"en\" srclang=\"{}\" datatype=\"plaintext\"/>\n<body>\n",
        env!("CARGO_PKG_VERSION"),
        escape(src_lang)
    ));
    for (a, b) in bead_pairs(result, src, tgt) {
        out.push_str(&format!(
            "<tu><tuv xml:lang=\"{}\"><seg>{}</seg></tuv><tuv xml:lang=\"{}\"><seg>{}</seg></tuv></tu>\n",
            escape(src_lang),
            escape(&a),
            escape(tgt_lang),
            escape(&b)
        ));
    }
    out.push_str("</body>\n</tmx>\n");
    out
}

/// One brochure holding every bead, empty sides included.
pub fn to_xml(result: &AlignmentResult, src: &SegmentedDocument, tgt: &SegmentedDocument, id: &str) -> String {
    let b = Brochure::new(id, "", bead_pairs(result, src, tgt));
    to_brochure_xml(&ParallelCorpus::new(vec![b]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Tmx,
    Xml,
    Plaintext,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tmx" => Ok(ExportFormat::Tmx),
            "xml" => Ok(ExportFormat::Xml),
            "plaintext" | "text" | "txt" => Ok(ExportFormat::Plaintext),
            other => Err(Error::validation(format!("unknown export format {other:?}"))),
        }
    }
}

/// Writes `result` under `prefix`: `prefix.tmx`, `prefix.xml`, or
/// `prefix.src` + `prefix.tgt`. Returns the files written.
pub fn export(
    result: &AlignmentResult,
    src: &SegmentedDocument,
    tgt: &SegmentedDocument,
    format: ExportFormat,
    prefix: &Path,
    langs: (&str, &str),
) -> Result<Vec<std::path::PathBuf>> {
    let with = |ext: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(".");
        p.push(ext);
        std::path::PathBuf::from(p)
    };
    let id = prefix.file_name().map_or_else(|| "aligned".to_string(), |s| s.to_string_lossy().into_owned());
    let files = match format {
        ExportFormat::Tmx => vec![(with("tmx"), to_tmx(result, src, tgt, langs.0, langs.1))],
        ExportFormat::Xml => vec![(with("xml"), to_xml(result, src, tgt, &id))],
        ExportFormat::Plaintext => {
            let (s, t) = to_plaintext(result, src, tgt);
            vec![(with("src"), s), (with("tgt"), t)]
        }
    };
    for (path, body) in &files {
        crate::cli::write_atomic(path, body.as_bytes())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_of_lengths(ls: &[usize]) -> SegmentedDocument {
        SegmentedDocument::from_sentences(ls.iter().map(|&l| "x".repeat(l)))
    }

    #[test]
    fn segmentation_rules() {
        assert_eq!(segment("A. B? C").sentences, vec!["A.", "B?", "C"]);
        assert!(segment("").is_empty());
        assert_eq!(segment("x y z").sentences, vec!["x y z"]);
        assert_eq!(segment("3.5 mg. Next؟ done").sentences, vec!["3.5 mg.", "Next؟", "done"]);
        assert_eq!(segment("ئەمە").lengths, vec![4]);
    }

    #[test]
    fn equal_lengths_align_diagonally() {
        let d = doc_of_lengths(&[12, 40, 7, 33]);
        let r = gale_church_align(&d, &d, &AlignParams::default());
        assert_eq!(r.beads.len(), 4);
        assert!(r.beads.iter().all(|b| b.kind == BeadKind::OneOne));
    }

    #[test]
    fn two_to_one() {
        let r = gale_church_align(&doc_of_lengths(&[60, 30]), &doc_of_lengths(&[90]), &AlignParams::default());
        assert_eq!(r.beads.len(), 1);
        assert_eq!(r.beads[0].kind, BeadKind::TwoOne);
    }

    #[test]
    fn empty_side() {
        let r = gale_church_align(&doc_of_lengths(&[]), &doc_of_lengths(&[5, 6]), &AlignParams::default());
        assert_eq!(r.beads.len(), 2);
        assert!(r.beads.iter().all(|b| b.kind == BeadKind::Insertion));
        r.validate(0, 2).unwrap();
    }

    #[test]
    fn costs_are_non_negative_and_finite() {
        let p = AlignParams::default();
        for kind in BeadKind::ALL {
            for (a, b) in [(0, 0), (1, 500), (500, 1), (10_000, 0)] {
                let c = bead_cost(kind, a, b, &p);
                assert!(c.is_finite() && c >= 0.0, "{kind} {a} {b} {c}");
            }
        }
    }

    #[test]
    fn edits() {
        let p = AlignParams::default();
        let s = doc_of_lengths(&[10, 20, 30]);
        let t = doc_of_lengths(&[10, 20, 30]);
        let r = gale_church_align(&s, &t, &p);
        let merged = apply_edit(&r, Edit::Merge(0), &s, &t, &p).unwrap();
        assert_eq!(merged.beads[0].kind, BeadKind::TwoTwo);
        assert_eq!(merged.beads.len(), 2);

        let two_one = AlignmentResult {
            beads: vec![make_bead(BeadKind::TwoOne, 0..2, 0..1, &s, &t, &p), make_bead(BeadKind::OneTwo, 2..3, 1..3, &s, &t, &p)],
            total_cost: 0.0,
        };
        let split = apply_edit(&two_one, Edit::Split { bead: 0, src_at: 1, tgt_at: 1 }, &s, &t, &p).unwrap();
        assert_eq!(split.beads[0].kind, BeadKind::OneOne);
        assert_eq!(split.beads[1].kind, BeadKind::Deletion);

        let shifted = apply_edit(&r, Edit::Shift { bead: 0, side: Side::Target, forward: true }, &s, &t, &p).unwrap();
        assert_eq!(shifted.beads[0].kind, BeadKind::OneTwo);
        assert_eq!(shifted.beads[1].kind, BeadKind::Deletion);

        let last = r.beads.len() - 1;
        assert!(apply_edit(&r, Edit::Shift { bead: last, side: Side::Source, forward: true }, &s, &t, &p).is_err());
        assert!(apply_edit(&merged, Edit::Merge(0), &s, &t, &p).is_err());
    }

    #[test]
    fn plaintext_drops_one_sided_beads() {
        let p = AlignParams::default();
        let s = SegmentedDocument::from_sentences(["a.", "b."]);
        let t = SegmentedDocument::from_sentences(["x."]);
        let r = AlignmentResult {
            beads: vec![make_bead(BeadKind::OneOne, 0..1, 0..1, &s, &t, &p), make_bead(BeadKind::Deletion, 1..2, 1..1, &s, &t, &p)],
            total_cost: 0.0,
        };
        let (a, b) = to_plaintext(&r, &s, &t);
        assert_eq!((a.as_str(), b.as_str()), ("a.\n", "x.\n"));
        let tmx = to_tmx(&r, &s, &t, "en", "ckb");
        let back = crate::corpus::parse_tmx(&tmx, "t").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.targets().nth(1), Some(""));
    }
}
