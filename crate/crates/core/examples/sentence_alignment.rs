//! Aligns the sentences of two translated documents and exports the beads.

use pbsmt::salign::{self, AlignParams};

const EN: &str = "Read this leaflet carefully. Keep it, you may need to read it again.\n\
Take one tablet twice a day with water.\n\
Do not use after the expiry date.";

const KU: &str = "ئەم نامیلکەیە بە وردی بخوێنەوە. بیپارێزە، لەوانەیە پێویستت پێی ببێتەوە.\n\
ڕۆژانە دوو جار یەک حەب لەگەڵ ئاو بخۆ.\n\
دوای بەسەرچوونی ماوە بەکاری مەهێنە.";

fn main() -> pbsmt::Result<()> {
    let (src, tgt) = (salign::segment(EN), salign::segment(KU));
    let result = salign::gale_church_align(&src, &tgt, &AlignParams::default());
    result.validate(src.len(), tgt.len())?;

    println!("{} source and {} target sentences in {} beads (cost {:.2})", src.len(), tgt.len(), result.beads.len(), result.total_cost);
    for (bead, (s, t)) in result.beads.iter().zip(salign::bead_pairs(&result, &src, &tgt)) {
        println!("[{}] {s}\n      {t}", bead.kind);
    }
    println!("\n{}", salign::to_tmx(&result, &src, &tgt, "en", "ckb"));
    Ok(())
}
