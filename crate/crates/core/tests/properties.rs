//! Property tests for the per-module invariants.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use pbsmt::corpus::{self, Brochure, Granularity, ParallelCorpus, SplitSpec};
use pbsmt::decoder::{decode, DecoderConfig, FeatureWeights};
use pbsmt::evalmetrics::bleu;
use pbsmt::lm::{count_ngrams, estimate_discounts, estimate_kn, NGramModel};
use pbsmt::phrasetable::{build_table, LexicalTables};
use pbsmt::salign::{self, AlignParams, BeadKind, Edit, SegmentedDocument, Side};
use pbsmt::seed::rng;
use pbsmt::textprep::{self, clean_pairs, tokenize, CleaningRules, TokenizedPair, TokenizedSentence, TruecaseModel};
use pbsmt::wordalign::{symmetrize, train_ibm1, viterbi_align, AlignmentMatrix, Direction, EMConfig, Heuristic};
use proptest::prelude::*;

fn words(max_vocab: usize, max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec((0..max_vocab).prop_map(|i| format!("w{i}")), 0..=max_len)
}

fn links(ns: usize, nt: usize) -> impl Strategy<Value = BTreeSet<(usize, usize)>> {
    prop::collection::btree_set((0..ns, 0..nt), 0..=ns * nt)
}

fn pair_multiset(c: &ParallelCorpus) -> BTreeMap<(String, String), usize> {
    let mut m = BTreeMap::new();
    for p in c.pairs() {
        *m.entry((p.source.clone(), p.target.clone())).or_default() += 1;
    }
    m
}

fn categorized_corpus() -> impl Strategy<Value = ParallelCorpus> {
    prop::collection::vec((0..4usize, 1..6usize), 1..12).prop_map(|spec| {
        let brochures = spec
            .into_iter()
            .enumerate()
            .map(|(b, (cat, n))| {
                Brochure::new(format!("b{b}"), format!("c{cat}"), (0..n).map(|i| (format!("s {b} {i}"), format!("t {b} {i}"))))
            })
            .collect();
        ParallelCorpus::new(brochures)
    })
}

// ───────────────────────────────────────────────────────────────────────────
// corpus
// ───────────────────────────────────────────────────────────────────────────

proptest! {
    #[test]
    fn variants_preserve_or_bound_pairs(c in categorized_corpus(), seed in any::<u64>()) {
        let input = pair_multiset(&c);
        prop_assert_eq!(&pair_multiset(&corpus::shuffle_aligned(&c, seed)), &input);
        prop_assert_eq!(&pair_multiset(&corpus::mix_sentences(&c, seed)), &input);
        prop_assert_eq!(&pair_multiset(&corpus::merge(&c)), &input);
        let grouped = corpus::group_by_category(&c, seed).unwrap();
        prop_assert_eq!(&pair_multiset(&grouped), &input);
        let under = pair_multiset(&corpus::undersample(&grouped, seed).unwrap());
        prop_assert!(under.iter().all(|(k, n)| input.get(k).is_some_and(|m| n <= m)));
        let over = pair_multiset(&corpus::oversample(&grouped, seed).unwrap());
        prop_assert!(input.iter().all(|(k, n)| over.get(k).is_some_and(|m| m >= n)));
        prop_assert!(over.keys().all(|k| input.contains_key(k)));
    }

    #[test]
    fn variants_are_pure_functions_of_the_seed(c in categorized_corpus(), seed in any::<u64>()) {
        let xml = corpus::to_brochure_xml;
        prop_assert_eq!(xml(&corpus::mix_sentences(&c, seed)), xml(&corpus::mix_sentences(&c, seed)));
        let g = corpus::group_by_category(&c, seed).unwrap();
        prop_assert_eq!(xml(&corpus::oversample(&g, seed).unwrap()), xml(&corpus::oversample(&g, seed).unwrap()));
    }

    #[test]
    fn split_partitions_the_corpus(c in categorized_corpus(), num in 1u64..=9, line in any::<bool>()) {
        let g = if line { Granularity::Line } else { Granularity::Brochure };
        let spec = SplitSpec::new(num, 10, g).unwrap();
        let units = if line { c.len() } else { c.num_brochures() };
        let k = spec.train_count(units);
        let (train, test) = match corpus::split(&c, &spec) {
            Ok(sides) => sides,
            Err(_) => {
                // rejected exactly when one side would be empty
                prop_assert!(k == 0 || k == units);
                return Ok(());
            }
        };
        prop_assert_eq!(train.len() + test.len(), c.len());
        let mut joined = pair_multiset(&train);
        for (k, n) in pair_multiset(&test) {
            *joined.entry(k).or_default() += n;
        }
        prop_assert_eq!(joined, pair_multiset(&c));
        if !line {
            prop_assert_eq!(train.num_brochures(), spec.train_count(c.num_brochures()));
            let ids: BTreeSet<_> = train.brochures.iter().map(|b| &b.id).collect();
            prop_assert!(test.brochures.iter().all(|b| !ids.contains(&b.id)));
        } else {
            prop_assert_eq!(train.len(), spec.train_count(c.len()));
        }
    }
}

// ───────────────────────────────────────────────────────────────────────────
// salign
// ───────────────────────────────────────────────────────────────────────────

fn brute_force_cost(src: &[usize], tgt: &[usize], p: &AlignParams) -> f64 {
    if src.is_empty() && tgt.is_empty() {
        return 0.0;
    }
    let kinds = [BeadKind::OneOne, BeadKind::Insertion, BeadKind::Deletion, BeadKind::OneTwo, BeadKind::TwoOne, BeadKind::TwoTwo];
    let mut best = f64::INFINITY;
    for k in kinds {
        let (ds, dt) = k.sizes();
        if ds <= src.len() && dt <= tgt.len() {
            let c = salign::bead_cost(k, src[..ds].iter().sum(), tgt[..dt].iter().sum(), p)
                + brute_force_cost(&src[ds..], &tgt[dt..], p);
            best = best.min(c);
        }
    }
    best
}

fn doc(lengths: &[usize]) -> SegmentedDocument {
    SegmentedDocument::from_sentences(lengths.iter().map(|&n| "x".repeat(n)))
}

proptest! {
    #[test]
    fn gale_church_is_optimal(src in prop::collection::vec(1usize..80, 0..=5), tgt in prop::collection::vec(1usize..80, 0..=5)) {
        let p = AlignParams::default();
        let r = salign::gale_church_align(&doc(&src), &doc(&tgt), &p);
        let want = brute_force_cost(&src, &tgt, &p);
        prop_assert!((r.total_cost - want).abs() <= 1e-9 * want.abs().max(1.0), "dp {} vs brute {}", r.total_cost, want);
        r.validate(src.len(), tgt.len()).unwrap();
        let bead_sum: f64 = r.beads.iter().map(|b| b.cost).sum();
        prop_assert!((bead_sum - r.total_cost).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn edits_keep_full_coverage(
        src in prop::collection::vec(1usize..60, 1..=8),
        tgt in prop::collection::vec(1usize..60, 1..=8),
        edits in prop::collection::vec((0u8..3, 0usize..8, 0usize..3, 0usize..3, any::<bool>(), any::<bool>()), 0..12),
    ) {
        let p = AlignParams::default();
        let (s, t) = (doc(&src), doc(&tgt));
        let mut r = salign::gale_church_align(&s, &t, &p);
        for (op, bead, a, b, side, fwd) in edits {
            let edit = match op {
                0 => Edit::Merge(bead),
                1 => Edit::Split { bead, src_at: a, tgt_at: b },
                _ => Edit::Shift { bead, side: if side { Side::Source } else { Side::Target }, forward: fwd },
            };
            if let Ok(next) = salign::apply_edit(&r, edit, &s, &t, &p) {
                r = next;
            }
            prop_assert!(r.validate(src.len(), tgt.len()).is_ok());
        }
        let (ps, pt) = salign::to_plaintext(&r, &s, &t);
        prop_assert_eq!(ps.lines().count(), pt.lines().count());
    }
}

// ───────────────────────────────────────────────────────────────────────────
// textprep
// ───────────────────────────────────────────────────────────────────────────

proptest! {
    #[test]
    fn tokenization_is_idempotent(line in "\\PC{0,40}") {
        let once = tokenize(&line);
        prop_assert_eq!(tokenize(&once.joined()).tokens, once.tokens);
    }

    #[test]
    fn tokenization_is_idempotent_on_prose(line in "[A-Za-z0-9 .,;:!?'\"()%/-]{0,60}|[ئابپتجچحخدرڕزژسشعغفڤقکگلڵمنوۆهەیێ ،؟.]{0,40}") {
        let once = tokenize(&line);
        prop_assert_eq!(tokenize(&once.joined()).tokens, once.tokens);
    }

    #[test]
    fn truecasing_touches_only_the_first_token(
        train in prop::collection::vec("[A-Za-z]{1,3}( [A-Za-z]{1,3}){0,4}", 1..20),
        line in "[A-Za-z]{1,3}( [A-Za-z]{1,3}){0,4}",
    ) {
        let sents: Vec<TokenizedSentence> = train.iter().map(|l| tokenize(l)).collect();
        let model = TruecaseModel::train(sents.iter()).unwrap();
        let s = tokenize(&line);
        let tc = textprep::truecase(&s, &model);
        prop_assert_eq!(tc.tokens.len(), s.tokens.len());
        prop_assert_eq!(&tc.tokens[1..], &s.tokens[1..]);
        prop_assert_eq!(tc.tokens[0].to_lowercase(), s.tokens[0].to_lowercase());
    }

    #[test]
    fn cleaning_keeps_only_valid_pairs(
        pairs in prop::collection::vec(("[a-c ]{0,30}", "[a-c ]{0,30}"), 1..30),
        min in 1usize..3, span in 0usize..6, ratio in 1.0f64..4.0,
    ) {
        let rules = CleaningRules { min_tokens: min, max_tokens: min + span, max_length_ratio: ratio };
        let c = ParallelCorpus::from_lines("x", pairs.clone());
        let (kept, report) = clean_pairs(&c, &rules);
        prop_assert_eq!(kept.len() + report.total(), c.len());
        for p in kept.pairs() {
            prop_assert!(rules.verdict(tokenize(&p.source).len(), tokenize(&p.target).len()).is_none());
        }
    }
}

// ───────────────────────────────────────────────────────────────────────────
// wordalign, phrasetable
// ───────────────────────────────────────────────────────────────────────────

fn aligned_corpus() -> impl Strategy<Value = Vec<TokenizedPair>> {
    prop::collection::vec(
        (words(6, 5), words(6, 5))
            .prop_filter("non-empty", |(s, t)| !s.is_empty() && !t.is_empty())
            .prop_map(|(s, t)| TokenizedPair::new(s, t)),
        1..10,
    )
}

fn gdfa_alignments(pairs: &[TokenizedPair]) -> (Vec<AlignmentMatrix>, pbsmt::wordalign::Ibm1Model, pbsmt::wordalign::Ibm1Model) {
    let cfg = EMConfig::default();
    let f = train_ibm1(pairs, &cfg, Direction::SrcToTgt).unwrap();
    let b = train_ibm1(pairs, &cfg, Direction::TgtToSrc).unwrap();
    let a = pairs
        .iter()
        .map(|p| symmetrize(&viterbi_align(p, &f.table), &viterbi_align(p, &b.table), Heuristic::GrowDiagFinalAnd).unwrap())
        .collect();
    (a, f, b)
}

proptest! {
    #[test]
    fn symmetrization_sandwich((ns, nt, f, b) in (1usize..7, 1usize..7).prop_flat_map(|(n, m)| (Just(n), Just(m), links(n, m), links(m, n)))) {
        let fwd = AlignmentMatrix::from_links(ns, nt, f).unwrap();
        let bwd = AlignmentMatrix::from_links(nt, ns, b).unwrap();
        let inter = symmetrize(&fwd, &bwd, Heuristic::Intersection).unwrap().links;
        let union = symmetrize(&fwd, &bwd, Heuristic::Union).unwrap().links;
        prop_assert!(inter.is_subset(&union));
        for h in [Heuristic::Intersection, Heuristic::Union, Heuristic::GrowDiagFinalAnd] {
            let g = symmetrize(&fwd, &bwd, h).unwrap().links;
            prop_assert!(inter.is_subset(&g) && g.is_subset(&union), "{:?}", h);
        }
    }

    #[test]
    fn phrase_probabilities_normalize(pairs in aligned_corpus()) {
        let (a, f, b) = gdfa_alignments(&pairs);
        let table = build_table(&pairs, &a, LexicalTables { forward: &f.table, backward: &b.table }, 10).unwrap();
        for (src, entries) in table.iter() {
            let sum: f64 = entries.iter().map(|e| e.phi_tgt_given_src).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-6, "{:?} sums to {}", src, sum);
        }
    }

    #[test]
    fn adding_a_pair_never_removes_an_entry(pairs in aligned_corpus(), extra in aligned_corpus()) {
        let (a, f, b) = gdfa_alignments(&pairs);
        let (ea, ..) = gdfa_alignments(&extra);
        let lex = LexicalTables { forward: &f.table, backward: &b.table };
        let before = build_table(&pairs, &a, lex, 7).unwrap();
        let mut more = pairs.clone();
        more.push(extra[0].clone());
        let mut more_a = a.clone();
        more_a.push(ea[0].clone());
        let after = build_table(&more, &more_a, lex, 7).unwrap();
        for (src, entries) in before.iter() {
            let now: BTreeSet<_> = after.get(src).iter().map(|e| e.tgt.clone()).collect();
            prop_assert!(entries.iter().all(|e| now.contains(&e.tgt)), "{:?} lost a translation", src);
        }
    }
}

// ───────────────────────────────────────────────────────────────────────────
// lm
// ───────────────────────────────────────────────────────────────────────────

fn lm_of(corpus: &[Vec<String>]) -> NGramModel {
    let counts = count_ngrams(corpus.iter(), 3).unwrap();
    estimate_kn(&counts, &estimate_discounts(&counts)).unwrap()
}

proptest! {
    #[test]
    fn every_context_normalizes(
        corpus in prop::collection::vec(words(8, 8), 1..15).prop_filter("has words", |c| c.iter().any(|s| !s.is_empty())),
        ctx in prop::collection::vec(prop_oneof![(0usize..9).prop_map(|i| format!("w{i}")), Just("<s>".to_string())], 0..=2),
    ) {
        let m = lm_of(&corpus);
        let h: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let sum: f64 = m.predictable_words().iter().map(|w| m.prob(&h, w)).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6, "context {:?} sums to {}", h, sum);
    }

    #[test]
    fn arpa_round_trip_is_a_fixed_point(corpus in prop::collection::vec(words(8, 8), 1..15).prop_filter("has words", |c| c.iter().any(|s| !s.is_empty()))) {
        let text = lm_of(&corpus).to_arpa();
        let again = NGramModel::from_arpa(&text).unwrap();
        prop_assert_eq!(again.to_arpa(), text);
    }
}

#[test]
fn more_training_data_lowers_perplexity() {
    let all: Vec<Vec<String>> = pbsmt::synth::copy_language(2300, 50, 17).sources().map(common::toks).collect();
    let held_out = &all[2000..];
    let small = lm_of(&all[..200]).perplexity(held_out);
    let big = lm_of(&all[..2000]).perplexity(held_out);
    assert!(big <= small, "10x data: {big} vs {small}");
}

// ───────────────────────────────────────────────────────────────────────────
// decoder
// ───────────────────────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wider_beams_never_score_worse(seed in any::<u64>(), sentence in prop::collection::vec(0usize..13, 1..9)) {
        let mut r = rng(seed);
        let table = common::random_table(&mut r, 10, 50);
        let lm = common::random_lm(&mut r, 10, 100);
        // f10.. are not in the table
        let sentence: Vec<String> = sentence.into_iter().map(|i| format!("f{i}")).collect();
        let w = FeatureWeights::default();
        let narrow = decode(&sentence, &table, &lm, &w, &DecoderConfig { beam_size: 1, ..DecoderConfig::default() });
        let wide = decode(&sentence, &table, &lm, &w, &DecoderConfig::default());
        prop_assert!(wide.model_score >= narrow.model_score - 1e-9);

        for out in [&narrow, &wide] {
            let again = common::rescore(&out.segmentation, &lm, &w);
            prop_assert!((again - out.model_score).abs() <= 1e-9 * again.abs().max(1.0));
            let oov: Vec<&String> = sentence.iter().filter(|t| !table.knows_source_word(t)).collect();
            let at_spans: Vec<&String> = out.oov_spans.iter().map(|&i| &out.tokens[i]).collect();
            for t in &oov {
                prop_assert_eq!(at_spans.iter().filter(|x| **x == *t).count(), oov.iter().filter(|x| **x == *t).count());
            }
        }
    }
}

// ───────────────────────────────────────────────────────────────────────────
// evalmetrics
// ───────────────────────────────────────────────────────────────────────────

proptest! {
    #[test]
    fn bleu_properties(
        cands in prop::collection::vec(words(5, 10), 1..6),
        refs_seed in prop::collection::vec(words(5, 10), 1..6),
    ) {
        let n = cands.len().min(refs_seed.len());
        let (c, r) = (&cands[..n], &refs_seed[..n]);
        if c.iter().any(|s| !s.is_empty()) {
            prop_assert_eq!(bleu(c, c).unwrap().score, 100.0);
        }
        let rep = bleu(c, r).unwrap();
        prop_assert!((0.0..=100.0).contains(&rep.score));
        if rep.candidate_length > 0 {
            prop_assert!(rep.brevity_penalty > 0.0 && rep.brevity_penalty <= 1.0);
        }
        prop_assert!((rep.score - common::bleu_oracle(c, r)).abs() < 1e-9);
    }
}
