//! Aligned bilingual corpora: data model, I/O, cleaning, the seven
//! preparation variants and train/test splitting.
//!
//! Corpus values are never mutated in place by the operations here; every
//! operation returns a new corpus.

mod clean;
mod io;
mod split;
mod variants;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use clean::{clean_duplicates, DuplicatePolicy, Removal, RemovalReason, RemovalReport};
pub(crate) use io::escape;
pub use io::{
    load_brochure_xml, load_plaintext, load_tmx, parse_brochure_xml, parse_tmx, save_brochure_xml,
    save_plaintext, to_brochure_xml,
};
pub use split::{split, Granularity, SplitSpec};
pub use variants::{
    group_by_category, merge, mix_sentences, oversample, shuffle_aligned, undersample,
};

/// One aligned line pair. Neither side contains a line break.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: String,
    pub target: String,
    pub origin_brochure: String,
    /// 0-based index of this pair inside `origin_brochure`.
    pub origin_line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Brochure {
    pub id: String,
    /// Empty until category tags are attached.
    pub category: String,
    pub pairs: Vec<SentencePair>,
}

impl Brochure {
    /// Builds a brochure from raw (source, target) lines, stamping origins.
    pub fn new<S, T>(id: impl Into<String>, category: impl Into<String>, lines: impl IntoIterator<Item = (S, T)>) -> Self
    where
        S: Into<String>,
        T: Into<String>,
    {
        let id = id.into();
        let pairs = lines
            .into_iter()
            .enumerate()
            .map(|(i, (s, t))| SentencePair {
                source: s.into(),
                target: t.into(),
                origin_brochure: id.clone(),
                origin_line: i,
            })
            .collect();
        Brochure {
            id,
            category: category.into(),
            pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// A brochure lacking any target-side text.
    pub fn is_incomplete(&self) -> bool {
        self.pairs.iter().all(|p| p.target.trim().is_empty())
    }

    fn restamp(&mut self) {
        for (i, p) in self.pairs.iter_mut().enumerate() {
            p.origin_brochure.clone_from(&self.id);
            p.origin_line = i;
        }
    }
}

/// Which preparation step produced a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantTag {
    /// As loaded or cleaned; no preparation variant applied.
    Loaded,
    /// V1: all brochures merged into one text.
    Merged,
    /// V2: line-level shuffle of the merged text.
    Shuffled,
    /// V3: brochure-tagged XML.
    Tagged,
    /// V4: sentences mixed across brochures.
    Mixed,
    /// V5: grouped by category, shuffled and mixed within groups.
    Grouped,
    /// V6: per-category undersampling.
    Undersampled,
    /// V7: per-category oversampling.
    Oversampled,
}

impl VariantTag {
    pub fn version(self) -> Option<u8> {
        match self {
            VariantTag::Loaded => None,
            VariantTag::Merged => Some(1),
            VariantTag::Shuffled => Some(2),
            VariantTag::Tagged => Some(3),
            VariantTag::Mixed => Some(4),
            VariantTag::Grouped => Some(5),
            VariantTag::Undersampled => Some(6),
            VariantTag::Oversampled => Some(7),
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VariantTag::Loaded => "loaded",
            VariantTag::Merged => "merged",
            VariantTag::Shuffled => "shuffled",
            VariantTag::Tagged => "tagged",
            VariantTag::Mixed => "mixed",
            VariantTag::Grouped => "grouped",
            VariantTag::Undersampled => "undersampled",
            VariantTag::Oversampled => "oversampled",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub brochures: Vec<Brochure>,
    pub variant_tag: VariantTag,
    pub rng_seed: u64,
}

impl ParallelCorpus {
    pub fn new(brochures: Vec<Brochure>) -> Self {
        ParallelCorpus {
            brochures,
            variant_tag: VariantTag::Loaded,
            rng_seed: 0,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    /// Builds a single-brochure corpus from raw line pairs.
    pub fn from_lines<S, T>(id: &str, lines: impl IntoIterator<Item = (S, T)>) -> Self
    where
        S: Into<String>,
        T: Into<String>,
    {
        Self::new(vec![Brochure::new(id, "", lines)])
    }

    /// Total number of line pairs.
    pub fn len(&self) -> usize {
        self.brochures.iter().map(Brochure::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_brochures(&self) -> usize {
        self.brochures.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SentencePair> {
        self.brochures.iter().flat_map(|b| b.pairs.iter())
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.pairs().map(|p| p.source.as_str())
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.pairs().map(|p| p.target.as_str())
    }

    pub fn brochure(&self, id: &str) -> Option<&Brochure> {
        self.brochures.iter().find(|b| b.id == id)
    }

    /// Checks the structural invariants: unique ids, no line breaks, and
    /// every pair's origin resolving inside its brochure.
    pub fn validate(&self) -> crate::Result<()> {
        let mut seen = std::collections::HashSet::new();
        for b in &self.brochures {
            if !seen.insert(b.id.as_str()) {
                return Err(crate::Error::validation(format!("duplicate brochure id {:?}", b.id)));
            }
        }
        for b in &self.brochures {
            for p in &b.pairs {
                if p.source.contains(['\n', '\r']) || p.target.contains(['\n', '\r']) {
                    return Err(crate::Error::validation(format!(
                        "brochure {:?} line {} contains a line break",
                        b.id, p.origin_line
                    )));
                }
                match self.brochure(&p.origin_brochure) {
                    Some(o) if p.origin_line < o.len() => {}
                    _ => {
                        return Err(crate::Error::validation(format!(
                            "pair origin {}:{} does not resolve",
                            p.origin_brochure, p.origin_line
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn with_tag(mut self, tag: VariantTag, seed: u64) -> Self {
        self.variant_tag = tag;
        self.rng_seed = seed;
        self
    }

    pub(crate) fn restamp(&mut self) {
        for b in &mut self.brochures {
            b.restamp();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_duplicate_ids() {
        let c = ParallelCorpus::new(vec![
            Brochure::new("b1", "", [("a", "x")]),
            Brochure::new("b1", "", [("b", "y")]),
        ]);
        assert!(matches!(c.validate(), Err(crate::Error::Validation(_))));
    }

    #[test]
    fn origins_resolve() {
        let c = ParallelCorpus::new(vec![
            Brochure::new("b1", "", [("a", "x"), ("b", "y")]),
            Brochure::new("b2", "", [("c", "z")]),
        ]);
        c.validate().unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.pairs().nth(1).unwrap().origin_line, 1);
    }
}
