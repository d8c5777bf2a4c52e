//! The corpus preparation variants. Every randomized operation is a pure
//! function of its input corpus and seed.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{Brochure, ParallelCorpus, SentencePair, VariantTag};
use crate::seed::rng;
use crate::{Error, Result};

/// Id given to the single brochure produced by merging.
pub const MERGED_ID: &str = "merged";

fn flatten(corpus: &ParallelCorpus) -> Vec<SentencePair> {
    corpus.pairs().cloned().collect()
}

fn single(id: &str, pairs: Vec<SentencePair>) -> Vec<Brochure> {
    if pairs.is_empty() {
        return Vec::new();
    }
    vec![Brochure {
        id: id.to_string(),
        category: String::new(),
        pairs,
    }]
}

fn merged_id(corpus: &ParallelCorpus) -> &str {
    match corpus.brochures.as_slice() {
        [only] => &only.id,
        _ => MERGED_ID,
    }
}

/// V1: concatenates every brochure, in order, into one brochure.
pub fn merge(corpus: &ParallelCorpus) -> ParallelCorpus {
    let mut out = ParallelCorpus::new(single(merged_id(corpus), flatten(corpus)));
    out.restamp();
    out.with_tag(VariantTag::Merged, corpus.rng_seed)
}

/// V2: line-level shuffle of the merged text. Each source line stays bound
/// to its target line; the result is a single brochure.
pub fn shuffle_aligned(corpus: &ParallelCorpus, seed: u64) -> ParallelCorpus {
    let mut pairs = flatten(corpus);
    pairs.shuffle(&mut rng(seed));
    let mut out = ParallelCorpus::new(single(merged_id(corpus), pairs));
    out.restamp();
    out.with_tag(VariantTag::Shuffled, seed)
}

/// Refills the slots of `brochures` (sizes fixed) with a random permutation
/// of their pooled pairs.
fn mix_slots(brochures: &mut [Brochure], r: &mut impl Rng) {
    let sizes: Vec<usize> = brochures.iter().map(Brochure::len).collect();
    let mut pool: Vec<SentencePair> = brochures.iter_mut().flat_map(|b| std::mem::take(&mut b.pairs)).collect();
    pool.shuffle(r);
    let mut it = pool.into_iter();
    for (b, n) in brochures.iter_mut().zip(sizes) {
        b.pairs = it.by_ref().take(n).collect();
    }
}

/// V4: keeps the brochure slots (ids, categories, sizes, order) and fills
/// them with sentences drawn at random from the whole corpus.
pub fn mix_sentences(corpus: &ParallelCorpus, seed: u64) -> ParallelCorpus {
    let mut out = corpus.clone();
    mix_slots(&mut out.brochures, &mut rng(seed));
    out.restamp();
    out.with_tag(VariantTag::Mixed, seed)
}

fn require_categories(corpus: &ParallelCorpus) -> Result<()> {
    match corpus.brochures.iter().find(|b| b.category.trim().is_empty()) {
        Some(b) => Err(Error::validation(format!("brochure {:?} has no category label", b.id))),
        None => Ok(()),
    }
}

/// Brochure indices grouped by category, categories in sorted order,
/// members in input order.
fn category_groups(corpus: &ParallelCorpus) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, b) in corpus.brochures.iter().enumerate() {
        groups.entry(b.category.as_str()).or_default().push(i);
    }
    groups
}

/// V5: orders brochures by category (categories sorted by name), shuffles
/// the brochures within each category, then mixes sentences among the
/// brochures of the same category.
pub fn group_by_category(corpus: &ParallelCorpus, seed: u64) -> Result<ParallelCorpus> {
    require_categories(corpus)?;
    let mut r = rng(seed);
    let mut brochures = Vec::with_capacity(corpus.num_brochures());
    for members in category_groups(corpus).into_values() {
        let mut group: Vec<Brochure> = members.iter().map(|&i| corpus.brochures[i].clone()).collect();
        group.shuffle(&mut r);
        mix_slots(&mut group, &mut r);
        brochures.extend(group);
    }
    let mut out = ParallelCorpus::new(brochures);
    out.restamp();
    Ok(out.with_tag(VariantTag::Grouped, seed))
}

/// V6: trims every brochure to the length of the smallest brochure in its
/// category, removing uniformly random pairs. Survivors keep their order.
pub fn undersample(corpus: &ParallelCorpus, seed: u64) -> Result<ParallelCorpus> {
    require_categories(corpus)?;
    let mut r = rng(seed);
    let mut out = corpus.clone();
    for members in category_groups(corpus).into_values() {
        let target = members.iter().map(|&i| corpus.brochures[i].len()).min().unwrap_or(0);
        for i in members {
            let b = &mut out.brochures[i];
            if b.len() > target {
                let mut keep = index::sample(&mut r, b.len(), target).into_vec();
                keep.sort_unstable();
                b.pairs = keep.into_iter().map(|k| b.pairs[k].clone()).collect();
            }
        }
    }
    out.restamp();
    Ok(out.with_tag(VariantTag::Undersampled, seed))
}

/// V7: grows every brochure to the length of the largest brochure in its
/// category by appending pairs drawn with replacement from the brochure
/// itself.
pub fn oversample(corpus: &ParallelCorpus, seed: u64) -> Result<ParallelCorpus> {
    require_categories(corpus)?;
    let mut r = rng(seed);
    let mut out = corpus.clone();
    for members in category_groups(corpus).into_values() {
        let target = members.iter().map(|&i| corpus.brochures[i].len()).max().unwrap_or(0);
        for i in members {
            let b = &mut out.brochures[i];
            let n = b.len();
            if n == 0 {
                continue;
            }
            for _ in n..target {
                let k = r.gen_range(0..n);
                let p = b.pairs[k].clone();
                b.pairs.push(p);
            }
        }
    }
    out.restamp();
    Ok(out.with_tag(VariantTag::Oversampled, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(spec: &[(&str, &str, usize)]) -> ParallelCorpus {
        ParallelCorpus::new(
            spec.iter()
                .map(|&(id, cat, n)| {
                    Brochure::new(id, cat, (0..n).map(|i| (format!("{id} s{i}"), format!("{id} t{i}"))))
                })
                .collect(),
        )
    }

    fn sorted_pairs(c: &ParallelCorpus) -> Vec<(String, String)> {
        let mut v: Vec<_> = c.pairs().map(|p| (p.source.clone(), p.target.clone())).collect();
        v.sort();
        v
    }

    #[test]
    fn shuffle_is_deterministic_permutation() {
        let c = corpus(&[("b", "", 1000)]);
        let a = shuffle_aligned(&c, 7);
        assert_eq!(a, shuffle_aligned(&c, 7));
        assert_ne!(a, shuffle_aligned(&c, 8));
        assert_eq!(sorted_pairs(&a), sorted_pairs(&c));
        a.validate().unwrap();
    }

    #[test]
    fn shuffle_single_pair_unchanged() {
        let c = corpus(&[("b", "", 1)]);
        assert_eq!(shuffle_aligned(&c, 3).brochures[0].pairs, c.brochures[0].pairs);
    }

    #[test]
    fn mix_preserves_multiset_and_slots() {
        let c = corpus(&[("b1", "", 5), ("b2", "", 5)]);
        let m = mix_sentences(&c, 1);
        assert_eq!(m.len(), 10);
        assert_eq!(sorted_pairs(&m), sorted_pairs(&c));
        assert_eq!(m.brochures.iter().map(|b| b.id.as_str()).collect::<Vec<_>>(), ["b1", "b2"]);
        m.validate().unwrap();
    }

    #[test]
    fn mix_single_brochure_is_permutation() {
        let c = corpus(&[("b1", "", 20)]);
        let m = mix_sentences(&c, 5);
        assert_eq!(sorted_pairs(&m), sorted_pairs(&c));
    }

    #[test]
    fn undersample_to_category_min() {
        let c = corpus(&[("a", "x", 10), ("b", "x", 6), ("c", "y", 4)]);
        let u = undersample(&c, 0).unwrap();
        let lens: Vec<_> = u.brochures.iter().map(Brochure::len).collect();
        assert_eq!(lens, [6, 6, 4]);
        // survivors keep relative order
        let idx: Vec<usize> = u.brochures[0]
            .pairs
            .iter()
            .map(|p| p.source.trim_start_matches("a s").parse().unwrap())
            .collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        u.validate().unwrap();
    }

    #[test]
    fn oversample_to_category_max() {
        let c = corpus(&[("a", "x", 10), ("b", "x", 6), ("c", "y", 4)]);
        let o = oversample(&c, 0).unwrap();
        let lens: Vec<_> = o.brochures.iter().map(Brochure::len).collect();
        assert_eq!(lens, [10, 10, 4]);
        let orig: std::collections::HashSet<_> = c.brochures[1].pairs.iter().map(|p| p.source.clone()).collect();
        assert!(o.brochures[1].pairs.iter().all(|p| orig.contains(&p.source)));
        assert_eq!(&o.brochures[1].pairs[..6].iter().map(|p| &p.source).collect::<Vec<_>>(),
                   &c.brochures[1].pairs.iter().map(|p| &p.source).collect::<Vec<_>>());
    }

    #[test]
    fn category_required() {
        let c = corpus(&[("a", "x", 3), ("b", "", 2)]);
        for r in [undersample(&c, 0), oversample(&c, 0), group_by_category(&c, 0)] {
            match r {
                Err(Error::Validation(m)) => assert!(m.contains("\"b\"")),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn grouping_orders_categories_and_stays_within_them() {
        let c = corpus(&[("a", "zeta", 3), ("b", "alpha", 2), ("c", "zeta", 4), ("d", "alpha", 1)]);
        let g = group_by_category(&c, 9).unwrap();
        let cats: Vec<_> = g.brochures.iter().map(|b| b.category.as_str()).collect();
        assert_eq!(cats, ["alpha", "alpha", "zeta", "zeta"]);
        let alpha: usize = g.brochures[..2].iter().map(Brochure::len).sum();
        assert_eq!(alpha, 3);
        for p in g.brochures[..2].iter().flat_map(|b| &b.pairs) {
            assert!(p.source.starts_with('b') || p.source.starts_with('d'));
        }
        assert_eq!(sorted_pairs(&g), sorted_pairs(&c));
    }
}
