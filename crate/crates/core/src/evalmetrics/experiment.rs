//! The seven corpus-preparation experiments: variant chain, 9/10 split,
//! training, decoding of the held-out side and BLEU.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{bleu, format_score, BleuReport};
use crate::corpus::{self, Granularity, ParallelCorpus, SplitSpec};
use crate::pipeline::{PipelineConfig, TrainedSystem, TrainingReport};
use crate::{Error, Result};

/// A variant corpus and its train/test sides.
#[derive(Clone, Debug)]
pub struct PreparedExperiment {
    pub id: u8,
    pub corpus: ParallelCorpus,
    pub granularity: Granularity,
    pub train: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// Split granularity each experiment uses: the first two split a flat
/// line sequence, the rest split whole brochures.
pub fn default_granularity(id: u8) -> Granularity {
    if id <= 2 {
        Granularity::Line
    } else {
        Granularity::Brochure
    }
}

/// Builds the variant corpus of experiment `id` and splits it.
///
/// 1. merged original; 2. shuffled lines; 3. brochures as loaded;
/// 4. sentences mixed across brochures; 5. brochures grouped by category;
/// 6. grouped, then undersampled; 7. grouped, then oversampled.
pub fn prepare_experiment(
    id: u8,
    base: &ParallelCorpus,
    cfg: &PipelineConfig,
) -> Result<PreparedExperiment> {
    let seed = cfg.stage_seed("variant");
    let variant = match id {
        1 => corpus::merge(base),
        2 => corpus::shuffle_aligned(base, seed),
        3 => base.clone(),
        4 => corpus::mix_sentences(base, seed),
        5 => corpus::group_by_category(base, seed)?,
        6 => corpus::undersample(&corpus::group_by_category(base, seed)?, cfg.stage_seed("undersample"))?,
        7 => corpus::oversample(&corpus::group_by_category(base, seed)?, cfg.stage_seed("oversample"))?,
        _ => return Err(Error::validation(format!("experiment id must be 1..=7, got {id}"))),
    };
    let granularity = cfg.granularity.unwrap_or_else(|| default_granularity(id));
    let mut spec = SplitSpec::new(cfg.train_numerator, cfg.train_denominator, granularity)?;
    spec.seed = cfg.stage_seed("split");
    let (train, test) = corpus::split(&variant, &spec)?;
    Ok(PreparedExperiment {
        id,
        corpus: variant,
        granularity,
        train,
        test,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prepare_ms: u128,
    pub train_ms: u128,
    pub decode_ms: u128,
    pub score_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: u8,
    pub variant_tag: String,
    pub granularity: Granularity,
    pub total_lines: usize,
    pub train_lines: usize,
    pub test_lines: usize,
    pub train_brochures: usize,
    pub test_brochures: usize,
    pub training: TrainingReport,
    pub bleu: BleuReport,
    /// Present only when `report_timing` is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<StageTimings>,
    pub config: PipelineConfig,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn ms(t: Instant) -> u128 {
    t.elapsed().as_millis()
}

/// Runs experiment `id` end to end on `base`.
pub fn run_experiment(id: u8, base: &ParallelCorpus, cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let t0 = Instant::now();
    let prep = prepare_experiment(id, base, cfg)?;
    let prepare_ms = ms(t0);
    let t1 = Instant::now();
    let (system, training) = TrainedSystem::train(&prep.train, cfg)?;
    let train_ms = ms(t1);
    let t2 = Instant::now();
    let sources: Vec<String> = prep.test.sources().map(str::to_string).collect();
    let outputs = system.translate(&sources, cfg)?;
    let decode_ms = ms(t2);
    let t3 = Instant::now();
    let candidates: Vec<Vec<String>> = outputs.into_iter().map(|o| o.tokens).collect();
    let references: Vec<Vec<String>> = prep.test.targets().map(|t| system.prepare_reference(t)).collect();
    let bleu = bleu(&candidates, &references)?;
    let score_ms = ms(t3);
    log::info!("experiment {id}: BLEU {}", format_score(bleu.score));
    Ok(ExperimentReport {
        experiment: id,
        variant_tag: prep.corpus.variant_tag.to_string(),
        granularity: prep.granularity,
        total_lines: prep.corpus.len(),
        train_lines: prep.train.len(),
        test_lines: prep.test.len(),
        train_brochures: prep.train.num_brochures(),
        test_brochures: prep.test.num_brochures(),
        training,
        bleu,
        timing: cfg.report_timing.then_some(StageTimings {
            prepare_ms,
            train_ms,
            decode_ms,
            score_ms,
        }),
        config: cfg.clone(),
    })
}

/// `experiment<TAB>bleu` rows.
pub fn table2_tsv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("experiment\tbleu\n");
    for r in reports {
        out.push_str(&format!("Experiment {}\t{}\n", r.experiment, format_score(r.bleu.score)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn reference_corpus_split_counts() {
        let base = synth::reference_corpus();
        let cfg = PipelineConfig::default();
        let counts = |id| {
            let p = prepare_experiment(id, &base, &cfg).unwrap();
            (p.corpus.len(), p.train.len(), p.test.len())
        };
        assert_eq!(counts(1), (22_940, 20_646, 2_294));
        assert_eq!(counts(2), (22_940, 20_646, 2_294));
        let p3 = prepare_experiment(3, &base, &cfg).unwrap();
        assert_eq!((p3.train.num_brochures(), p3.test.num_brochures()), (287, 32));
        assert_eq!(counts(4), (22_940, 20_506, 2_434));
        assert_eq!(counts(5), (22_940, 20_612, 2_328));
        assert_eq!(counts(6), (16_767, 15_056, 1_711));
        assert_eq!(counts(7), (32_784, 29_475, 3_309));
        assert!(prepare_experiment(8, &base, &cfg).is_err());
    }
}
