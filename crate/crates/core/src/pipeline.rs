//! End-to-end training and translation: configuration, corpus loading,
//! the trained system bundle and its on-disk layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Brochure, Granularity, ParallelCorpus, SplitSpec};
use crate::decoder::{decode_corpus, DecoderConfig, FeatureWeights, TranslationOutput};
use crate::lm::{count_ngrams, estimate_discounts, estimate_kn, NGramModel};
use crate::phrasetable::{build_table, LexicalTables, PhraseTable};
use crate::seed::stage_seed;
use crate::textprep::{
    clean_pairs, recase, tokenize, truecase, CleaningReport, CleaningRules, ScriptNormalizer, TokenizedPair,
    TokenizedSentence, TruecaseModel,
};
use crate::wordalign::{symmetrize, train_ibm1, viterbi_align, AlignmentMatrix, Direction, EMConfig, Heuristic, TranslationTable};
use crate::{synth, Error, Result};

/// Flat pipeline configuration; every key can be set in a TOML file and
/// overridden with `--set key=value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub jobs: usize,

    pub corpus_src: Option<PathBuf>,
    pub corpus_tgt: Option<PathBuf>,
    pub corpus_xml: Option<PathBuf>,
    pub corpus_tmx: Option<PathBuf>,
    /// `copy`, `bijective` or `reference`: use a generated corpus instead of files.
    pub synthetic: Option<String>,
    pub synthetic_sentences: usize,
    pub synthetic_vocab: usize,
    pub model_dir: PathBuf,
    pub output_dir: PathBuf,

    /// Experiment / preparation chain, 1..=7.
    pub variant: u8,
    pub train_numerator: u64,
    pub train_denominator: u64,
    /// Overrides the granularity implied by `variant`.
    pub granularity: Option<Granularity>,

    pub normalize_script: bool,
    pub truecase: bool,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub max_length_ratio: f64,

    pub em_iterations: usize,
    pub em_min_prob: f64,
    pub em_epsilon: f64,
    pub symmetrization: String,
    pub max_phrase_len: usize,

    pub lm_order: usize,
    pub lm_discount: f64,
    /// Estimate per-order discounts from counts-of-counts instead.
    pub lm_estimate_discounts: bool,

    pub beam_size: usize,
    pub distortion_limit: i64,
    pub max_options_per_span: usize,
    pub w_phi_fwd: f64,
    pub w_phi_bwd: f64,
    pub w_lex_fwd: f64,
    pub w_lex_bwd: f64,
    pub w_lm: f64,
    pub w_word_penalty: f64,
    pub w_distortion: f64,

    pub dictionary: Option<PathBuf>,
    pub dictionary_max_window: usize,
    /// `offline` (stub map) or `live`.
    pub external_mode: String,
    pub external_endpoint: String,
    pub external_token_env: String,
    pub external_timeout_ms: u64,
    /// TSV `term<TAB>translation` backing the offline stub.
    pub external_stub: Option<PathBuf>,
    pub src_lang: String,
    pub tgt_lang: String,

    /// Record wall-clock timings in experiment reports (makes them
    /// non-reproducible byte for byte).
    pub report_timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let w = FeatureWeights::default();
        let d = DecoderConfig::default();
        let em = EMConfig::default();
        let clean = CleaningRules::default();
        PipelineConfig {
            seed: 0,
            jobs: 0,
            corpus_src: None,
            corpus_tgt: None,
            corpus_xml: None,
            corpus_tmx: None,
            synthetic: None,
            synthetic_sentences: 5000,
            synthetic_vocab: 50,
            model_dir: PathBuf::from("model"),
            output_dir: PathBuf::from("out"),
            variant: 1,
            train_numerator: 9,
            train_denominator: 10,
            granularity: None,
            normalize_script: true,
            truecase: true,
            min_tokens: clean.min_tokens,
            max_tokens: clean.max_tokens,
            max_length_ratio: clean.max_length_ratio,
            em_iterations: em.iterations,
            em_min_prob: em.min_prob_floor,
            em_epsilon: em.convergence_epsilon,
            symmetrization: "grow-diag-final-and".into(),
            max_phrase_len: crate::phrasetable::DEFAULT_MAX_LEN,
            lm_order: crate::lm::DEFAULT_ORDER,
            lm_discount: crate::lm::DEFAULT_DISCOUNT,
            lm_estimate_discounts: false,
            beam_size: d.beam_size,
            distortion_limit: d.distortion_limit,
            max_options_per_span: d.max_options_per_span,
            w_phi_fwd: w.w_phi_fwd,
            w_phi_bwd: w.w_phi_bwd,
            w_lex_fwd: w.w_lex_fwd,
            w_lex_bwd: w.w_lex_bwd,
            w_lm: w.w_lm,
            w_word_penalty: w.w_word_penalty,
            w_distortion: w.w_distortion,
            dictionary: None,
            dictionary_max_window: crate::postedit::DEFAULT_MAX_WINDOW,
            external_mode: "offline".into(),
            external_endpoint: "https://translation.googleapis.com/language/translate/v2".into(),
            external_token_env: "TRANSLATE_API_TOKEN".into(),
            external_timeout_ms: 5000,
            external_stub: None,
            src_lang: "en".into(),
            tgt_lang: "ckb".into(),
            report_timing: false,
        }
    }
}

fn parse_override(raw: &str) -> Result<(String, toml::Value)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| Error::validation(format!("override {raw:?} is not key=value")))?;
    let k = k.trim().to_string();
    let v = v.trim();
    // typed TOML literal when it parses, bare string otherwise
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k, value))
}

impl PipelineConfig {
    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::parse("config", line_of_toml_error(text, &e), e.message().to_string()))?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            table.insert(k, v);
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::validation(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.variant) {
            return Err(Error::validation(format!("variant must be 1..=7, got {}", self.variant)));
        }
        SplitSpec::new(self.train_numerator, self.train_denominator, Granularity::Line)?;
        self.cleaning_rules().validate()?;
        self.heuristic()?;
        self.weights().validate()?;
        self.decoder_config().validate()?;
        if self.lm_order == 0 {
            return Err(Error::validation("lm_order must be at least 1"));
        }
        if !(self.lm_discount > 0.0 && self.lm_discount < 1.0) {
            return Err(Error::validation("lm_discount must lie in (0, 1)"));
        }
        if self.max_phrase_len == 0 {
            return Err(Error::validation("max_phrase_len must be at least 1"));
        }
        if !matches!(self.external_mode.as_str(), "offline" | "live") {
            return Err(Error::validation(format!("external_mode must be offline or live, got {:?}", self.external_mode)));
        }
        if let Some(s) = &self.synthetic {
            if !matches!(s.as_str(), "copy" | "bijective" | "reference") {
                return Err(Error::validation(format!("unknown synthetic corpus {s:?}")));
            }
        }
        if self.corpus_src.is_some() != self.corpus_tgt.is_some() {
            return Err(Error::validation("corpus_src and corpus_tgt must be given together"));
        }
        for p in [&self.corpus_src, &self.corpus_tgt, &self.corpus_xml, &self.corpus_tmx, &self.dictionary, &self.external_stub]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "configured path does not exist")));
            }
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    pub fn em_config(&self) -> EMConfig {
        EMConfig {
            iterations: self.em_iterations,
            min_prob_floor: self.em_min_prob,
            convergence_epsilon: self.em_epsilon,
        }
    }

    pub fn heuristic(&self) -> Result<Heuristic> {
        self.symmetrization.parse()
    }

    pub fn cleaning_rules(&self) -> CleaningRules {
        CleaningRules {
            min_tokens: self.min_tokens,
            max_tokens: self.max_tokens,
            max_length_ratio: self.max_length_ratio,
        }
    }

    pub fn weights(&self) -> FeatureWeights {
        FeatureWeights {
            w_phi_fwd: self.w_phi_fwd,
            w_phi_bwd: self.w_phi_bwd,
            w_lex_fwd: self.w_lex_fwd,
            w_lex_bwd: self.w_lex_bwd,
            w_lm: self.w_lm,
            w_word_penalty: self.w_word_penalty,
            w_distortion: self.w_distortion,
        }
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            beam_size: self.beam_size,
            distortion_limit: self.distortion_limit,
            max_phrase_len: self.max_phrase_len,
            max_options_per_span: self.max_options_per_span,
        }
    }

    pub fn normalizer(&self) -> ScriptNormalizer {
        if self.normalize_script {
            ScriptNormalizer::default()
        } else {
            ScriptNormalizer::disabled()
        }
    }

    /// Loads the configured corpus: a synthetic one, brochure XML, TMX or a
    /// plain-text pair, in that order of precedence.
    pub fn load_corpus(&self) -> Result<ParallelCorpus> {
        let seed = self.stage_seed("synthetic");
        if let Some(kind) = &self.synthetic {
            let c = match kind.as_str() {
                "copy" => synth::copy_language(self.synthetic_sentences, self.synthetic_vocab, seed),
                "bijective" => synth::bijective_lexicon(self.synthetic_sentences, self.synthetic_vocab, seed),
                _ => synth::reference_corpus(),
            };
            return Ok(c);
        }
        if let Some(p) = &self.corpus_xml {
            return corpus::load_brochure_xml(p);
        }
        if let Some(p) = &self.corpus_tmx {
            return corpus::load_tmx(p);
        }
        match (&self.corpus_src, &self.corpus_tgt) {
            (Some(s), Some(t)) => corpus::load_plaintext(s, t),
            _ => Err(Error::validation(
                "no corpus configured: set synthetic, corpus_xml, corpus_tmx or corpus_src + corpus_tgt",
            )),
        }
    }
}

fn line_of_toml_error(text: &str, e: &toml::de::Error) -> usize {
    e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

/// Summary of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub pairs_in: usize,
    pub pairs_kept: usize,
    pub cleaning: CleaningReport,
    pub log_likelihood_fwd: Vec<f64>,
    pub log_likelihood_bwd: Vec<f64>,
    pub phrase_pairs: usize,
    pub lm_ngrams: Vec<usize>,
}

/// Everything needed to translate: text preparation models, phrase table
/// and language model.
#[derive(Clone, Debug)]
pub struct TrainedSystem {
    pub normalizer: ScriptNormalizer,
    pub use_truecase: bool,
    pub src_truecaser: TruecaseModel,
    pub tgt_truecaser: TruecaseModel,
    pub table: PhraseTable,
    pub lm: NGramModel,
    pub forward: TranslationTable,
    pub backward: TranslationTable,
    pub alignments: Vec<AlignmentMatrix>,
}

/// Normalizes and tokenizes one raw line.
pub fn prepare_line(line: &str, normalizer: &ScriptNormalizer) -> TokenizedSentence {
    tokenize(&normalizer.apply(line))
}

impl TrainedSystem {
    pub fn train(corpus: &ParallelCorpus, cfg: &PipelineConfig) -> Result<(Self, TrainingReport)> {
        let normalizer = cfg.normalizer();
        let tokenized = ParallelCorpus::new(
            corpus
                .brochures
                .iter()
                .map(|b| Brochure {
                    pairs: b
                        .pairs
                        .iter()
                        .map(|p| {
                            let mut p = p.clone();
                            p.source = prepare_line(&p.source, &normalizer).joined();
                            p.target = prepare_line(&p.target, &normalizer).joined();
                            p
                        })
                        .collect(),
                    ..b.clone()
                })
                .collect(),
        );
        let (clean, cleaning) = clean_pairs(&tokenized, &cfg.cleaning_rules());
        if clean.is_empty() {
            return Err(Error::validation("no training pairs survive cleaning"));
        }
        let split = |s: &str| TokenizedSentence::new(s.split(' ').map(str::to_string).collect());
        let src: Vec<TokenizedSentence> = clean.sources().map(split).collect();
        let tgt: Vec<TokenizedSentence> = clean.targets().map(split).collect();
        let src_truecaser = TruecaseModel::train(&src)?;
        let tgt_truecaser = TruecaseModel::train(&tgt)?;
        let (src, tgt): (Vec<_>, Vec<_>) = if cfg.truecase {
            (
                src.iter().map(|s| truecase(s, &src_truecaser)).collect(),
                tgt.iter().map(|s| truecase(s, &tgt_truecaser)).collect(),
            )
        } else {
            (src, tgt)
        };
        let pairs: Vec<TokenizedPair> = src
            .into_iter()
            .zip(tgt)
            .map(|(s, t)| TokenizedPair::new(s.tokens, t.tokens))
            .collect();

        let em = cfg.em_config();
        let fwd = train_ibm1(&pairs, &em, Direction::SrcToTgt)?;
        let bwd = train_ibm1(&pairs, &em, Direction::TgtToSrc)?;
        let heuristic = cfg.heuristic()?;
        let alignments: Vec<AlignmentMatrix> = pairs
            .iter()
            .map(|p| symmetrize(&viterbi_align(p, &fwd.table), &viterbi_align(p, &bwd.table), heuristic))
            .collect::<Result<_>>()?;
        let table = build_table(
            &pairs,
            &alignments,
            LexicalTables {
                forward: &fwd.table,
                backward: &bwd.table,
            },
            cfg.max_phrase_len,
        )?;

        let counts = count_ngrams(pairs.iter().map(|p| &p.target), cfg.lm_order)?;
        let discounts = if cfg.lm_estimate_discounts {
            estimate_discounts(&counts)
        } else {
            vec![cfg.lm_discount; cfg.lm_order]
        };
        let lm = estimate_kn(&counts, &discounts)?;

        let report = TrainingReport {
            pairs_in: corpus.len(),
            pairs_kept: pairs.len(),
            cleaning,
            log_likelihood_fwd: fwd.log_likelihood.clone(),
            log_likelihood_bwd: bwd.log_likelihood.clone(),
            phrase_pairs: table.len(),
            lm_ngrams: (1..=lm.order).map(|n| lm.num_ngrams(n)).collect(),
        };
        Ok((
            TrainedSystem {
                normalizer,
                use_truecase: cfg.truecase,
                src_truecaser,
                tgt_truecaser,
                table,
                lm,
                forward: fwd.table,
                backward: bwd.table,
                alignments,
            },
            report,
        ))
    }

    /// Source line as the decoder sees it.
    pub fn prepare_source(&self, line: &str) -> TokenizedSentence {
        let s = prepare_line(line, &self.normalizer);
        if self.use_truecase {
            truecase(&s, &self.src_truecaser)
        } else {
            s
        }
    }

    /// Reference line as BLEU sees it: normalized and tokenized, original case.
    pub fn prepare_reference(&self, line: &str) -> Vec<String> {
        prepare_line(line, &self.normalizer).tokens
    }

    /// Translates raw source lines; outputs are recased when the source
    /// lost sentence-initial capitalization to truecasing.
    pub fn translate(&self, lines: &[String], cfg: &PipelineConfig) -> Result<Vec<TranslationOutput>> {
        let prepared: Vec<TokenizedSentence> = lines.iter().map(|l| self.prepare_source(l)).collect();
        let sentences: Vec<Vec<String>> = prepared.iter().map(|s| s.tokens.clone()).collect();
        let mut outputs = decode_corpus(&sentences, &self.table, &self.lm, &cfg.weights(), &cfg.decoder_config(), cfg.jobs)?;
        for (out, src) in outputs.iter_mut().zip(&prepared) {
            if src.was_truecased {
                let s = TokenizedSentence {
                    tokens: std::mem::take(&mut out.tokens),
                    was_truecased: true,
                };
                out.tokens = recase(&s, &self.tgt_truecaser).tokens;
            }
        }
        Ok(outputs)
    }

    /// Writes the model files into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.src_truecaser.save(dir.join(files::TRUECASE_SRC))?;
        self.tgt_truecaser.save(dir.join(files::TRUECASE_TGT))?;
        self.forward.save(dir.join(files::LEX_FWD))?;
        self.backward.save(dir.join(files::LEX_BWD))?;
        let align: String = self.alignments.iter().map(|a| format!("{a}\n")).collect();
        crate::cli::write_atomic(&dir.join(files::ALIGNMENT), align.as_bytes())?;
        self.table.save(dir.join(files::PHRASE_TABLE))?;
        self.lm.save_arpa(dir.join(files::LM))
    }

    /// Loads what translation needs from `dir`; alignments are not read.
    pub fn load(dir: &Path, cfg: &PipelineConfig) -> Result<Self> {
        Ok(TrainedSystem {
            normalizer: cfg.normalizer(),
            use_truecase: cfg.truecase,
            src_truecaser: TruecaseModel::load(dir.join(files::TRUECASE_SRC))?,
            tgt_truecaser: TruecaseModel::load(dir.join(files::TRUECASE_TGT))?,
            table: PhraseTable::load(dir.join(files::PHRASE_TABLE))?,
            lm: NGramModel::load_arpa(dir.join(files::LM))?,
            forward: TranslationTable::load(dir.join(files::LEX_FWD), Direction::SrcToTgt)?,
            backward: TranslationTable::load(dir.join(files::LEX_BWD), Direction::TgtToSrc)?,
            alignments: Vec::new(),
        })
    }
}

/// File names inside a model directory.
pub mod files {
    pub const TRUECASE_SRC: &str = "truecase.src.tsv";
    pub const TRUECASE_TGT: &str = "truecase.tgt.tsv";
    pub const LEX_FWD: &str = "lex.src-tgt.tsv";
    pub const LEX_BWD: &str = "lex.tgt-src.tsv";
    pub const ALIGNMENT: &str = "aligned.txt";
    pub const PHRASE_TABLE: &str = "phrase-table.txt";
    pub const LM: &str = "lm.arpa";
}

/// Output tokens with OOV positions wrapped in `⟦…⟧`.
pub fn marked_line(out: &TranslationOutput) -> String {
    out.tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if out.oov_spans.contains(&i) {
                format!("{}{t}{}", crate::postedit::OOV_OPEN, crate::postedit::OOV_CLOSE)
            } else {
                t.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_typed() {
        let cfg = PipelineConfig::from_toml(
            "seed = 3\nbeam_size = 10\n",
            &["beam_size=5".into(), "symmetrization=union".into(), "w_lm=0.25".into()],
        )
        .unwrap();
        assert_eq!((cfg.seed, cfg.beam_size, cfg.w_lm), (3, 5, 0.25));
        assert_eq!(cfg.heuristic().unwrap(), Heuristic::Union);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(PipelineConfig::from_toml("nonsense_key = 1", &[]), Err(Error::Validation(_))));
        assert!(matches!(PipelineConfig::from_toml("seed = [", &[]), Err(Error::Parse { .. })));
        assert!(PipelineConfig::from_toml("", &["variant=9".into()]).is_err());
        assert!(PipelineConfig::from_toml("", &["beam_size".into()]).is_err());
        assert!(matches!(
            PipelineConfig::from_toml("", &["corpus_xml=/nonexistent/c.xml".into()]),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml(), &[]).unwrap(), cfg);
    }

    #[test]
    fn copy_language_system_translates_itself() {
        let cfg = PipelineConfig::default();
        let corpus = synth::copy_language(300, 20, 1);
        let (sys, report) = TrainedSystem::train(&corpus, &cfg).unwrap();
        assert_eq!(report.pairs_kept, 300);
        let lines: Vec<String> = corpus.sources().take(5).map(str::to_string).collect();
        for (line, out) in lines.iter().zip(sys.translate(&lines, &cfg).unwrap()) {
            assert_eq!(out.tokens.join(" "), *line);
        }
    }
}
