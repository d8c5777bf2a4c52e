use serde::{Deserialize, Serialize};

use super::{Brochure, ParallelCorpus};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Line,
    Brochure,
}

/// Train/test split parameters. The train fraction is kept as an exact
/// rational so that split sizes are exact integer arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_numerator: u64,
    pub train_denominator: u64,
    pub granularity: Granularity,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_numerator: 9,
            train_denominator: 10,
            granularity: Granularity::Line,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train_numerator: u64, train_denominator: u64, granularity: Granularity) -> Result<Self> {
        let spec = SplitSpec {
            train_numerator,
            train_denominator,
            granularity,
            seed: 0,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_granularity(self, granularity: Granularity) -> Self {
        SplitSpec { granularity, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.train_denominator == 0 || self.train_numerator == 0 || self.train_numerator >= self.train_denominator {
            return Err(Error::validation(format!(
                "train fraction {}/{} must lie strictly between 0 and 1",
                self.train_numerator, self.train_denominator
            )));
        }
        Ok(())
    }

    /// `floor(fraction * n)`.
    pub fn train_count(&self, n: usize) -> usize {
        (n as u128 * self.train_numerator as u128 / self.train_denominator as u128) as usize
    }
}

/// Splits a corpus without reshuffling: the train side is a prefix.
///
/// At line granularity brochure boundaries are kept, so the brochure
/// straddling the cut appears (partially) on both sides.
pub fn split(corpus: &ParallelCorpus, spec: &SplitSpec) -> Result<(ParallelCorpus, ParallelCorpus)> {
    spec.check()?;
    if corpus.is_empty() {
        return Err(Error::validation("cannot split an empty corpus"));
    }
    let (train, test): (Vec<Brochure>, Vec<Brochure>) = match spec.granularity {
        Granularity::Brochure => {
            let k = spec.train_count(corpus.num_brochures());
            (corpus.brochures[..k].to_vec(), corpus.brochures[k..].to_vec())
        }
        Granularity::Line => {
            let mut remaining = spec.train_count(corpus.len());
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for b in &corpus.brochures {
                if remaining >= b.len() {
                    remaining -= b.len();
                    train.push(b.clone());
                } else if remaining == 0 {
                    test.push(b.clone());
                } else {
                    let mut head = b.clone();
                    let tail = head.pairs.split_off(remaining);
                    remaining = 0;
                    train.push(head);
                    test.push(Brochure { pairs: tail, ..b.clone() });
                }
            }
            (train, test)
        }
    };
    let size = |v: &[Brochure]| match spec.granularity {
        Granularity::Brochure => v.len(),
        Granularity::Line => v.iter().map(Brochure::len).sum(),
    };
    if size(&train) == 0 || size(&test) == 0 {
        return Err(Error::validation(format!(
            "split {}/{} leaves an empty side (train {}, test {})",
            spec.train_numerator,
            spec.train_denominator,
            size(&train),
            size(&test)
        )));
    }
    let wrap = |brochures| {
        let mut c = ParallelCorpus::new(brochures);
        c.variant_tag = corpus.variant_tag;
        c.rng_seed = corpus.rng_seed;
        c.restamp();
        c
    };
    Ok((wrap(train), wrap(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(n: usize) -> ParallelCorpus {
        ParallelCorpus::from_lines("b", (0..n).map(|i| (i.to_string(), i.to_string())))
    }

    #[test]
    fn ten_lines() {
        let (tr, te) = split(&lines(10), &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), te.len()), (9, 1));
        assert_eq!(tr.pairs().last().unwrap().source, "8");
        assert_eq!(te.pairs().next().unwrap().source, "9");
    }

    #[test]
    fn full_corpus_line_split() {
        let spec = SplitSpec::default();
        assert_eq!(spec.train_count(22_940), 20_646);
        let (tr, te) = split(&lines(22_940), &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (20_646, 2_294));
    }

    #[test]
    fn full_corpus_brochure_split() {
        let c = ParallelCorpus::new((0..319).map(|i| Brochure::new(format!("b{i}"), "", [("s", "t")])).collect());
        let (tr, te) = split(&c, &SplitSpec::default().with_granularity(Granularity::Brochure)).unwrap();
        assert_eq!((tr.num_brochures(), te.num_brochures()), (287, 32));
    }

    #[test]
    fn straddling_brochure_keeps_id_on_both_sides() {
        let c = ParallelCorpus::new(vec![
            Brochure::new("a", "", (0..6).map(|i| (i.to_string(), i.to_string()))),
            Brochure::new("b", "", (0..4).map(|i| (i.to_string(), i.to_string()))),
        ]);
        let (tr, te) = split(&c, &SplitSpec::default()).unwrap();
        assert_eq!(tr.brochures.iter().map(Brochure::len).collect::<Vec<_>>(), [6, 3]);
        assert_eq!(te.brochures[0].id, "b");
        tr.validate().unwrap();
        te.validate().unwrap();
    }

    #[test]
    fn empty_side_rejected() {
        assert!(matches!(split(&lines(1), &SplitSpec::default()), Err(Error::Validation(_))));
        assert!(matches!(split(&lines(0), &SplitSpec::default()), Err(Error::Validation(_))));
        assert!(SplitSpec::new(1, 1, Granularity::Line).is_err());
    }
}
