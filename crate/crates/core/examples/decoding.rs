//! Decodes with a hand-built phrase table and language model, comparing
//! beam search against exhaustive search.

use std::collections::BTreeMap;

use pbsmt::decoder::{self, DecoderConfig, FeatureWeights};
use pbsmt::lm;
use pbsmt::phrasetable::{PhraseEntry, PhraseTable};

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn entry(tgt: &str, p: f64) -> PhraseEntry {
    PhraseEntry {
        tgt: words(tgt),
        phi_tgt_given_src: p,
        phi_src_given_tgt: p,
        lex_tgt_given_src: p,
        lex_src_given_tgt: p,
    }
}

fn main() -> pbsmt::Result<()> {
    let mut entries = BTreeMap::new();
    entries.insert(words("das"), vec![entry("the", 0.8), entry("that", 0.2)]);
    entries.insert(words("haus"), vec![entry("house", 0.9), entry("home", 0.1)]);
    entries.insert(words("ist"), vec![entry("is", 1.0)]);
    entries.insert(words("klein"), vec![entry("small", 0.7), entry("little", 0.3)]);
    entries.insert(words("das haus"), vec![entry("the house", 0.6)]);
    let table = PhraseTable::from_entries(entries, 3);

    let corpus: Vec<Vec<String>> = ["the house is small", "the house is big", "that is small"].iter().map(|s| words(s)).collect();
    let counts = lm::count_ngrams(corpus.iter(), 3)?;
    let model = lm::estimate_kn(&counts, &lm::estimate_discounts(&counts))?;

    let weights = FeatureWeights::default();
    for input in ["das haus ist klein", "klein ist das haus", "das auto ist klein"] {
        let src = words(input);
        let beam = decoder::decode(&src, &table, &model, &weights, &DecoderConfig::default());
        let exact = decoder::decode(&src, &table, &model, &weights, &DecoderConfig::exhaustive());
        println!("{input:<20} -> {:<22} score {:.3} (exhaustive {:.3}), unknown at {:?}", beam.tokens.join(" "), beam.model_score, exact.model_score, beam.oov_spans);
        for seg in &beam.segmentation {
            println!("    [{}..{}) -> {}", seg.src_start, seg.src_end, seg.tgt.join(" "));
        }
    }
    Ok(())
}
