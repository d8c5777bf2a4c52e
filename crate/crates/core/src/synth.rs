//! Synthetic corpora for tests, examples and the `--set synthetic=...`
//! CLI mode: copy and bijective-lexicon languages with known ideal
//! translations, a corpus with the shape of the original brochure
//! collection, and a raw collection with duplicates to clean.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Brochure, ParallelCorpus};
use crate::seed::rng;

/// (category index, pair count) of each brochure, in collection order.
///
/// 319 brochures over 76 categories totalling 22,940 pairs. Categories
/// 65..=75 hold 32 brochures in total; per-category minimum and maximum
/// sizes total 16,767 and 32,784.
const BROCHURE_SHAPE: [(u8, u16); 319] = [
    (29, 51), (18, 75), (41, 90), (10, 64), (1, 83), (40, 64), (60, 43), (22, 71),
    (65, 81), (66, 82), (53, 89), (6, 81), (7, 55), (44, 86), (49, 55), (12, 57),
    (0, 74), (52, 71), (16, 57), (18, 103), (8, 87), (63, 70), (26, 86), (55, 88),
    (22, 66), (70, 121), (72, 46), (26, 85), (16, 64), (40, 52), (12, 62), (12, 89),
    (35, 82), (1, 50), (64, 69), (30, 108), (63, 54), (60, 60), (35, 36), (14, 78),
    (23, 69), (52, 116), (12, 61), (25, 63), (27, 60), (56, 59), (65, 123), (45, 62),
    (50, 40), (43, 78), (26, 74), (15, 51), (53, 74), (4, 72), (19, 63), (57, 99),
    (2, 55), (48, 56), (72, 108), (30, 84), (11, 68), (16, 126), (66, 87), (48, 71),
    (28, 51), (44, 91), (11, 71), (74, 77), (33, 76), (61, 54), (14, 86), (51, 60),
    (65, 64), (30, 81), (38, 50), (59, 120), (62, 88), (32, 53), (18, 87), (28, 52),
    (28, 79), (36, 62), (55, 88), (46, 75), (36, 41), (50, 57), (0, 89), (14, 81),
    (41, 57), (45, 67), (30, 81), (43, 83), (44, 124), (53, 105), (21, 61), (29, 61),
    (4, 69), (54, 48), (8, 87), (13, 77), (37, 50), (13, 81), (24, 89), (3, 96),
    (31, 45), (57, 37), (36, 52), (75, 28), (70, 50), (58, 77), (34, 65), (54, 90),
    (40, 77), (29, 46), (24, 84), (2, 53), (1, 48), (20, 61), (65, 74), (49, 65),
    (0, 71), (34, 75), (33, 137), (52, 50), (6, 81), (58, 66), (24, 95), (50, 70),
    (73, 61), (44, 74), (53, 88), (69, 40), (5, 80), (51, 74), (60, 104), (42, 72),
    (62, 126), (31, 59), (50, 57), (2, 39), (61, 122), (62, 88), (18, 88), (32, 51),
    (20, 62), (30, 67), (54, 53), (57, 56), (0, 60), (47, 38), (14, 135), (68, 29),
    (33, 64), (59, 49), (0, 69), (37, 37), (39, 95), (38, 63), (10, 62), (4, 75),
    (55, 69), (21, 124), (47, 91), (20, 97), (23, 95), (52, 62), (40, 43), (69, 132),
    (15, 33), (22, 69), (46, 90), (56, 45), (4, 56), (51, 60), (22, 115), (66, 66),
    (42, 123), (7, 95), (64, 89), (43, 76), (12, 46), (48, 99), (28, 53), (72, 32),
    (34, 75), (9, 113), (20, 62), (26, 103), (1, 37), (19, 139), (54, 33), (21, 47),
    (40, 37), (16, 59), (66, 79), (46, 121), (38, 68), (57, 56), (17, 64), (73, 101),
    (3, 53), (3, 68), (37, 54), (39, 54), (26, 94), (15, 58), (67, 59), (47, 50),
    (3, 74), (25, 113), (45, 111), (64, 53), (59, 62), (19, 82), (55, 124), (17, 60),
    (46, 88), (49, 133), (74, 77), (32, 47), (31, 50), (43, 63), (70, 63), (38, 112),
    (2, 52), (58, 61), (60, 60), (19, 80), (9, 56), (23, 68), (29, 32), (67, 140),
    (32, 112), (50, 54), (38, 65), (56, 32), (59, 59), (9, 68), (27, 47), (28, 35),
    (34, 80), (41, 47), (35, 58), (48, 66), (23, 51), (67, 73), (7, 67), (10, 70),
    (42, 74), (21, 56), (11, 97), (20, 46), (34, 124), (13, 63), (62, 71), (16, 48),
    (69, 48), (32, 35), (15, 49), (64, 45), (5, 47), (25, 53), (5, 47), (45, 50),
    (6, 70), (25, 71), (14, 62), (65, 70), (63, 54), (10, 52), (27, 91), (7, 64),
    (47, 53), (49, 69), (9, 77), (4, 78), (24, 80), (58, 99), (6, 97), (67, 68),
    (10, 111), (61, 74), (8, 93), (5, 34), (44, 90), (17, 51), (36, 49), (2, 94),
    (52, 66), (74, 66), (31, 96), (8, 149), (71, 54), (11, 54), (39, 66), (33, 75),
    (74, 74), (17, 118), (46, 88), (42, 75), (37, 113), (61, 69), (6, 92), (18, 91),
    (35, 50), (24, 70), (39, 69), (48, 67), (63, 40), (75, 55), (42, 63), (56, 47),
    (22, 55), (51, 43), (8, 75), (13, 110), (27, 63), (36, 121), (41, 66),
];

pub const REFERENCE_BROCHURES: usize = 319;
pub const REFERENCE_LINES: usize = 22_940;
pub const REFERENCE_CATEGORIES: usize = 76;

pub fn category_name(index: usize) -> String {
    format!("cat-{index:02}")
}

/// Successors per word in [`random_sentences`].
const SUCCESSORS: usize = 8;

/// Sentences of `len_range` words: random walks on a random graph over
/// `vocab` in which every word has a few successors, so word order carries
/// signal as it does in natural text. The first word and each step are
/// uniform.
fn random_sentences(n: usize, vocab: &[String], len_range: (usize, usize), seed: u64) -> Vec<Vec<String>> {
    let mut r = rng(seed);
    let k = SUCCESSORS.min(vocab.len());
    let successors: Vec<Vec<usize>> = (0..vocab.len())
        .map(|_| rand::seq::index::sample(&mut r, vocab.len(), k).into_vec())
        .collect();
    (0..n)
        .map(|_| {
            let len = r.gen_range(len_range.0..=len_range.1);
            let mut cur = r.gen_range(0..vocab.len());
            let mut s = Vec::with_capacity(len);
            for _ in 0..len {
                s.push(vocab[cur].clone());
                cur = *successors[cur].choose(&mut r).unwrap();
            }
            s
        })
        .collect()
}

/// Synthetic brochures cycle through this many categories.
const SYNTH_CATEGORIES: usize = 5;

/// Groups consecutive pairs into brochures of `per_brochure` lines.
fn into_brochures(pairs: Vec<(String, String)>, per_brochure: usize, prefix: &str) -> ParallelCorpus {
    let mut brochures = Vec::new();
    let mut it = pairs.into_iter().peekable();
    while it.peek().is_some() {
        let chunk: Vec<(String, String)> = it.by_ref().take(per_brochure).collect();
        let idx = brochures.len();
        brochures.push(Brochure::new(format!("{prefix}-{idx:04}"), category_name(idx % SYNTH_CATEGORIES), chunk));
    }
    ParallelCorpus::new(brochures)
}

/// `n` sentences whose target equals the source.
pub fn copy_language(n: usize, vocab_size: usize, seed: u64) -> ParallelCorpus {
    let vocab: Vec<String> = (0..vocab_size).map(|i| format!("w{i}")).collect();
    let pairs = random_sentences(n, &vocab, (3, 12), seed)
        .into_iter()
        .map(|s| {
            let line = s.join(" ");
            (line.clone(), line)
        })
        .collect();
    into_brochures(pairs, 50, "copy")
}

/// The fixed source→target word map of [`bijective_lexicon`].
pub fn bijective_map(vocab_size: usize, seed: u64) -> Vec<(String, String)> {
    let mut targets: Vec<usize> = (0..vocab_size).collect();
    targets.shuffle(&mut rng(seed ^ 0x5eed));
    (0..vocab_size).map(|i| (format!("s{i}"), format!("t{}", targets[i]))).collect()
}

/// `n` sentences translated word for word, in order, through a random
/// bijection between two vocabularies of `vocab_size` words.
pub fn bijective_lexicon(n: usize, vocab_size: usize, seed: u64) -> ParallelCorpus {
    let map = bijective_map(vocab_size, seed);
    let src_vocab: Vec<String> = map.iter().map(|(s, _)| s.clone()).collect();
    let pairs = random_sentences(n, &src_vocab, (3, 12), seed)
        .into_iter()
        .map(|s| {
            let tgt: Vec<&str> = s
                .iter()
                .map(|w| map[w[1..].parse::<usize>().unwrap()].1.as_str())
                .collect();
            (s.join(" "), tgt.join(" "))
        })
        .collect();
    into_brochures(pairs, 50, "bij")
}

/// 319 categorized brochures with the size profile of the original
/// collection; the text is filler.
pub fn reference_corpus() -> ParallelCorpus {
    let brochures = BROCHURE_SHAPE
        .iter()
        .enumerate()
        .map(|(b, &(cat, size))| {
            let lines = (0..size as usize).map(|i| (format!("leaflet {b} line {i}"), format!("نامیلکە {b} دێڕ {i}")));
            Brochure::new(format!("br-{b:03}"), category_name(cat as usize), lines)
        })
        .collect();
    ParallelCorpus::new(brochures)
}

pub const RAW_COLLECTION_SIZE: usize = 774;
pub const RAW_DUPLICATES: usize = 426;
pub const RAW_INCOMPLETE: usize = 29;

/// A raw collection of 774 brochures: the 319 of [`reference_corpus`],
/// 426 re-issued copies with version suffixes and 29 brochures lacking a
/// translation.
pub fn raw_collection(seed: u64) -> Vec<Brochure> {
    let base = reference_corpus().brochures;
    let mut r = rng(seed);
    let mut out: Vec<Brochure> = base.clone();
    for k in 0..RAW_DUPLICATES {
        let orig = &base[r.gen_range(0..base.len())];
        let mut copy = orig.clone();
        copy.id = format!("{}-v{}", orig.id, k + 2);
        copy.pairs.iter_mut().for_each(|p| p.origin_brochure = copy.id.clone());
        out.push(copy);
    }
    for k in 0..RAW_INCOMPLETE {
        let lines = (0..5).map(|i| (format!("untranslated {k} {i}"), String::new()));
        out.push(Brochure::new(format!("draft-{k:02}"), "", lines));
    }
    out.shuffle(&mut r);
    out
}
