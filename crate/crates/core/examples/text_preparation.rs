//! Normalizes, tokenizes, truecases and filters sentence pairs.

use pbsmt::corpus::ParallelCorpus;
use pbsmt::textprep::{self, CleaningRules, ScriptNormalizer, TruecaseModel};

fn main() -> pbsmt::Result<()> {
    let normalizer = ScriptNormalizer::default();
    let lines = ["The tablet is white.", "Keep the tablet dry!", "The dose (5 mg) is small.", "ماددەی كاریگەر: ١٠ ملگ"];
    let sentences: Vec<_> = lines.iter().map(|l| textprep::tokenize(&normalizer.apply(l))).collect();
    for s in &sentences {
        println!("{}", s.joined());
    }

    let model = TruecaseModel::train(&sentences)?;
    for s in &sentences {
        let cased = textprep::truecase(s, &model);
        println!("truecased: {:<30} detokenized: {}", cased.joined(), textprep::detokenize(&textprep::recase(&cased, &model).tokens));
    }

    let corpus = ParallelCorpus::from_lines("demo", [("a b c", "x y z"), ("", "x"), ("a", "x y z w v u t s r q p")]);
    let (kept, report) = textprep::clean_pairs(&corpus, &CleaningRules::default());
    println!("kept {} of {} pairs; dropped {report:?}", kept.len(), corpus.len());
    Ok(())
}
