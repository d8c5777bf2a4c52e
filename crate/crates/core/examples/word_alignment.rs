//! Trains IBM Model 1 in both directions and symmetrizes the Viterbi
//! alignments.

use pbsmt::textprep::TokenizedPair;
use pbsmt::wordalign::{self, Direction, EMConfig, Heuristic};

fn main() -> pbsmt::Result<()> {
    let corpus: Vec<TokenizedPair> = [
        ("the house", "das haus"),
        ("the book", "das buch"),
        ("a book", "ein buch"),
        ("a small house", "ein kleines haus"),
    ]
    .iter()
    .map(|(s, t)| TokenizedPair::from_strs(s, t))
    .collect();

    let config = EMConfig { iterations: 20, ..EMConfig::default() };
    let fwd = wordalign::train_ibm1(&corpus, &config, Direction::SrcToTgt)?;
    let bwd = wordalign::train_ibm1(&corpus, &config, Direction::TgtToSrc)?;
    println!("log-likelihood by iteration: {:.3?}", fwd.log_likelihood);
    println!("t(haus|house) = {:.3}, t(das|house) = {:.3}", fwd.table.prob("house", "haus"), fwd.table.prob("house", "das"));

    for pair in &corpus {
        let f = wordalign::viterbi_align(pair, &fwd.table);
        let b = wordalign::viterbi_align(pair, &bwd.table);
        let sym = wordalign::symmetrize(&f, &b, Heuristic::GrowDiagFinalAnd)?;
        println!("{:<16} | {:<18} | {sym}", pair.source.join(" "), pair.target.join(" "));
    }
    Ok(())
}
