//! Cleans a raw brochure collection, builds each corpus variant and splits
//! it into training and test sides.

use pbsmt::corpus::{self, DuplicatePolicy, Granularity, RemovalReason, SplitSpec};
use pbsmt::synth;

fn main() -> pbsmt::Result<()> {
    let raw = synth::raw_collection(3);
    let (clean, removed) = corpus::clean_duplicates(raw, &DuplicatePolicy::default());
    println!(
        "cleaned: {} brochures, {} lines ({} duplicates, {} incomplete removed)",
        clean.num_brochures(),
        clean.len(),
        removed.count(RemovalReason::Duplicate),
        removed.count(RemovalReason::Incomplete)
    );

    let variants = [
        ("merged", corpus::merge(&clean)),
        ("shuffled", corpus::shuffle_aligned(&clean, 1)),
        ("mixed", corpus::mix_sentences(&clean, 1)),
        ("grouped", corpus::group_by_category(&clean, 1)?),
        ("undersampled", corpus::undersample(&clean, 1)?),
        ("oversampled", corpus::oversample(&clean, 1)?),
    ];
    for (name, v) in &variants {
        let granularity = if v.num_brochures() > 1 { Granularity::Brochure } else { Granularity::Line };
        let (train, test) = corpus::split(v, &SplitSpec::new(9, 10, granularity)?)?;
        println!(
            "{name:>12}: {:>6} lines in {:>4} brochures -> train {:>6}, test {:>5}",
            v.len(),
            v.num_brochures(),
            train.len(),
            test.len()
        );
    }
    Ok(())
}
