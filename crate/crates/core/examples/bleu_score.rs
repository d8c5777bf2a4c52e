//! Scores candidate translations against references with corpus BLEU.

use pbsmt::evalmetrics::{self, BleuOptions};

fn main() -> pbsmt::Result<()> {
    let refs = vec![
        "the cat is on the mat".split(' ').collect::<Vec<_>>(),
        "there is a cat on the mat".split(' ').collect(),
    ];
    for cand in [["the cat is on the mat", "there is a cat on the mat"], ["the cat sat on the mat", "a cat is on a mat"], ["the cat", "a cat"]] {
        let cands: Vec<Vec<&str>> = cand.iter().map(|s| s.split(' ').collect()).collect();
        let r = evalmetrics::bleu(&cands, &refs)?;
        println!(
            "{:<45} BLEU {:>6}  BP {:.3}  p = {:.3?}",
            cand.join(" / "),
            r.display_score(),
            r.brevity_penalty,
            r.precisions
        );
    }
    let smoothed = evalmetrics::bleu_with(&[vec!["the", "dog"]], &[vec!["the", "cat"]], BleuOptions { smoothing: true, ..BleuOptions::default() })?;
    println!("smoothed BLEU of a 2-word partial match: {}", smoothed.display_score());
    Ok(())
}
