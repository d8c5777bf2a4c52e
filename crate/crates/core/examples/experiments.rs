//! Runs the seven corpus-preparation experiments end to end on a generated
//! corpus and prints the results table.

use pbsmt::evalmetrics as experiment;
use pbsmt::pipeline::PipelineConfig;

fn main() -> pbsmt::Result<()> {
    let cfg = PipelineConfig {
        synthetic: Some("bijective".into()),
        synthetic_sentences: 1000,
        ..PipelineConfig::default()
    };
    cfg.validate()?;
    let base = cfg.load_corpus()?;
    println!("base corpus: {} lines in {} brochures", base.len(), base.num_brochures());

    let mut reports = Vec::new();
    for id in 1..=7 {
        let r = experiment::run_experiment(id, &base, &cfg)?;
        println!(
            "experiment {id} ({}, {:?}): train {} / test {} lines, BLEU {}",
            r.variant_tag,
            r.granularity,
            r.train_lines,
            r.test_lines,
            r.bleu.display_score()
        );
        reports.push(r);
    }
    print!("\n{}", experiment::table2_tsv(&reports));
    Ok(())
}
