//! Trains a small system, translates sentences containing unknown words
//! and repairs them with a dictionary and an offline translation stub.

use pbsmt::corpus::ParallelCorpus;
use pbsmt::evalmetrics;
use pbsmt::pipeline::{marked_line, PipelineConfig, TrainedSystem};
use pbsmt::postedit::{self, EditSource, MedicalDictionary, OfflineStub};
use pbsmt::synth;

fn main() -> pbsmt::Result<()> {
    // a one-to-one word mapping; the model only ever sees s0..s19
    let map = synth::bijective_map(24, 2);
    let known = |w: &str| w[1..].parse::<usize>().unwrap() < 20;
    let full = synth::bijective_lexicon(4000, 24, 2);
    let train = ParallelCorpus::from_lines("train", full.pairs().filter(|p| p.source.split(' ').all(known)).map(|p| (p.source.clone(), p.target.clone())));
    let cfg = PipelineConfig { distortion_limit: 0, ..PipelineConfig::default() };
    let (system, report) = TrainedSystem::train(&train, &cfg)?;
    println!("trained on {} pairs: {} phrase entries", report.pairs_kept, system.table.len());

    let tr = |w: &str| map.iter().find(|(s, _)| s == w).map(|(_, t)| t.clone()).unwrap();
    let sources = ["s1 s2 s21 s3", "s4 s22 s5", "s6 s7 s23"];
    let test = ParallelCorpus::from_lines("test", sources.iter().map(|s| (s.to_string(), s.split(' ').map(tr).collect::<Vec<_>>().join(" "))));
    let lines: Vec<String> = test.sources().map(str::to_string).collect();
    let outputs = system.translate(&lines, &cfg)?;
    for o in &outputs {
        println!("decoded:     {}", marked_line(o));
    }

    let mut dict = MedicalDictionary::default();
    dict.insert("s21", vec![tr("s21")], "from the glossary")?;
    dict.insert("s22", vec![tr("s22")], "from the glossary")?;
    let stub = OfflineStub::new([("s23", tr("s23"))]);
    let (edited, reports) = postedit::post_edit_pipeline(&outputs, &dict, &stub, ("en", "ckb"), dict.max_key_len());
    for (o, r) in edited.iter().zip(&reports) {
        println!(
            "post-edited: {:<24} ({} dictionary, {} external)",
            o.tokens.join(" "),
            r.count(EditSource::Dictionary),
            r.count(EditSource::External)
        );
    }

    let refs: Vec<Vec<String>> = test.targets().map(|t| system.prepare_reference(t)).collect();
    let cmp = evalmetrics::compare_pre_post(&outputs, &edited, &refs)?;
    println!("BLEU {} -> {} ({:+.2})", cmp.pre.display_score(), cmp.post.display_score(), cmp.delta);
    Ok(())
}
