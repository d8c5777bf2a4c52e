//! Estimates an interpolated Kneser-Ney trigram model, queries it and
//! round-trips it through ARPA.

use pbsmt::lm;

fn main() -> pbsmt::Result<()> {
    let train: Vec<Vec<String>> = [
        "take one tablet daily",
        "take two tablets daily",
        "take one capsule with water",
        "do not take more than two tablets",
        "store tablets in a dry place",
    ]
    .iter()
    .map(|s| s.split(' ').map(str::to_string).collect())
    .collect();

    let counts = lm::count_ngrams(train.iter(), 3)?;
    let discounts = lm::estimate_discounts(&counts);
    let model = lm::estimate_kn(&counts, &discounts)?;
    println!("discounts {discounts:.3?}; {} / {} / {} n-grams", model.num_ngrams(1), model.num_ngrams(2), model.num_ngrams(3));

    for (ctx, w) in [(&["take", "one"][..], "tablet"), (&["take", "one"], "capsule"), (&["take", "one"], "water"), (&[], "zzz")] {
        println!("p({w} | {}) = {:.4}", ctx.join(" "), model.prob(ctx, w));
    }
    let test: Vec<Vec<&str>> = vec!["take one tablet with water".split(' ').collect()];
    println!("perplexity of held-out sentence: {:.2}", model.perplexity(&test));

    let arpa = model.to_arpa();
    let reloaded = lm::NGramModel::from_arpa(&arpa)?;
    assert_eq!(reloaded.to_arpa(), arpa);
    println!("\n{}", arpa.lines().take(12).collect::<Vec<_>>().join("\n"));
    Ok(())
}
