//! Extracts consistent phrase pairs from an aligned sentence and scores a
//! small phrase table.

use pbsmt::phrasetable::{self, LexicalTables};
use pbsmt::textprep::TokenizedPair;
use pbsmt::wordalign::{self, AlignmentMatrix, Direction, EMConfig};

fn main() -> pbsmt::Result<()> {
    let pair = TokenizedPair::from_strs("michael assumes that he will stay", "michael geht davon aus dass er bleibt");
    let alignment = AlignmentMatrix::parse("0-0 1-1 1-2 1-3 2-4 3-5 4-6 5-6", 6, 7)?;
    println!("phrases consistent with {alignment}:");
    for span in phrasetable::extract_phrases(&pair, &alignment, 7) {
        let p = span.phrase(&pair);
        println!("  {} ||| {}", p.src.join(" "), p.tgt.join(" "));
    }

    let corpus: Vec<TokenizedPair> = [("the house", "das haus"), ("the small house", "das kleine haus"), ("small", "klein")]
        .iter()
        .map(|(s, t)| TokenizedPair::from_strs(s, t))
        .collect();
    let cfg = EMConfig { iterations: 10, ..EMConfig::default() };
    let fwd = wordalign::train_ibm1(&corpus, &cfg, Direction::SrcToTgt)?;
    let bwd = wordalign::train_ibm1(&corpus, &cfg, Direction::TgtToSrc)?;
    let alignments = corpus
        .iter()
        .map(|p| wordalign::symmetrize(&wordalign::viterbi_align(p, &fwd.table), &wordalign::viterbi_align(p, &bwd.table), wordalign::Heuristic::GrowDiagFinalAnd))
        .collect::<pbsmt::Result<Vec<_>>>()?;
    let lex = LexicalTables { forward: &fwd.table, backward: &bwd.table };
    let table = phrasetable::build_table(&corpus, &alignments, lex, 3)?;
    println!("\n{} entries for {} source phrases:\n{}", table.len(), table.num_sources(), table.to_text());
    Ok(())
}
