//! The `pbsmt` command-line driver.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::corpus::{self, ParallelCorpus};
use crate::decoder::TranslationOutput;
use crate::evalmetrics::{self, bleu_with, compare_pre_post, BleuOptions, ExperimentReport};
use crate::pipeline::{marked_line, PipelineConfig, TrainedSystem};
use crate::postedit::{self, LiveTranslator, MedicalDictionary, OfflineStub, TranslatorMode};
use crate::salign::{self, AlignParams, ExportFormat};
use crate::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so readers never see a partial file. Parent directories are
/// created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Parser, Debug)]
#[command(name = "pbsmt", version, about = "Phrase-based statistical machine translation toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging on standard error (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a corpus variant and write its train/test split.
    Prepare {
        /// Variant chain 1..=7 (default: `variant` from the config).
        #[arg(long)]
        variant: Option<u8>,
        /// Drop duplicate and untranslated brochures first.
        #[arg(long)]
        clean: bool,
        /// Output directory (default: `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sentence-align two unaligned documents.
    Salign {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        /// tmx, xml or plaintext.
        #[arg(long, default_value = "tmx")]
        format: String,
        /// Output path prefix; the extension is added.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        mean_ratio: f64,
        #[arg(long, default_value_t = 6.8)]
        variance: f64,
    },
    /// Train truecasers, word alignment, phrase table and language model.
    Train {
        /// Source training file (with --tgt); default: the configured corpus's train split.
        #[arg(long, requires = "tgt")]
        src: Option<PathBuf>,
        #[arg(long, requires = "src")]
        tgt: Option<PathBuf>,
    },
    /// Translate one sentence per line with a trained model.
    Translate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// JSON-lines report with scores, segmentation and OOV positions.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Copy of the output with untranslated words wrapped in ⟦…⟧.
        #[arg(long)]
        marked: Option<PathBuf>,
    },
    /// Fix untranslated words using a dictionary, then the external translator.
    Postedit {
        /// Decoder report written by `translate --report`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// JSON-lines log of every edit.
        #[arg(long)]
        edits: Option<PathBuf>,
        /// Dictionary TSV (default: `dictionary` from the config).
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    /// Corpus BLEU of a candidate file against a reference file.
    Bleu {
        #[arg(long)]
        cand: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Add-one smoothing for higher-order precisions.
        #[arg(long)]
        smooth: bool,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run one of the seven experiments end to end.
    Experiment {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=7))]
        id: u8,
        /// Report path (default: `output_dir/experiment-<id>.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate experiment reports and pre/post-editing comparisons as TSV.
    Report {
        /// Experiment report JSON files.
        reports: Vec<PathBuf>,
        /// `NAME=PRE,POST,REF` text files for a before/after table (repeatable).
        #[arg(long = "compare", value_name = "NAME=PRE,POST,REF")]
        compare: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn config(common: &Common) -> Result<PipelineConfig> {
    let mut overrides = common.set.clone();
    if let Some(j) = common.jobs {
        overrides.push(format!("jobs={j}"));
    }
    PipelineConfig::load(common.config.as_deref(), &overrides)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

fn lines_to_string<S: AsRef<str>>(lines: impl IntoIterator<Item = S>) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    out
}

fn tokens_of(lines: &[String]) -> Vec<Vec<String>> {
    lines.iter().map(|l| l.split_whitespace().map(str::to_string).collect()).collect()
}

fn load_base(cfg: &PipelineConfig, clean: bool) -> Result<ParallelCorpus> {
    let c = cfg.load_corpus()?;
    if !clean {
        return Ok(c);
    }
    let (c, report) = corpus::clean_duplicates(c.brochures, &corpus::DuplicatePolicy::default());
    write_atomic(&cfg.output_dir.join("removed.tsv"), report.to_tsv().as_bytes())?;
    Ok(c)
}

fn translator(cfg: &PipelineConfig) -> Result<TranslatorMode> {
    Ok(match cfg.external_mode.as_str() {
        "live" => TranslatorMode::Live(LiveTranslator::new(
            &cfg.external_endpoint,
            &cfg.external_token_env,
            Duration::from_millis(cfg.external_timeout_ms),
        )),
        _ => TranslatorMode::Offline(match &cfg.external_stub {
            Some(p) => OfflineStub::load(p)?,
            None => OfflineStub::default(),
        }),
    })
}

fn dispatch(cli: Cli) -> Result<()> {
    let common = cli.common;
    match cli.command {
        Command::Prepare { variant, clean, out } => {
            let mut cfg = config(&common)?;
            if let Some(v) = variant {
                cfg.variant = v;
                cfg.validate()?;
            }
            let base = load_base(&cfg, clean)?;
            let prep = evalmetrics::prepare_experiment(cfg.variant, &base, &cfg)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            corpus::save_brochure_xml(&prep.corpus, dir.join("variant.xml"))?;
            corpus::save_plaintext(&prep.train, dir.join("train.src"), dir.join("train.tgt"))?;
            corpus::save_plaintext(&prep.test, dir.join("test.src"), dir.join("test.tgt"))?;
            println!(
                "variant {}: {} lines; train {} lines / {} brochures; test {} lines / {} brochures",
                cfg.variant,
                prep.corpus.len(),
                prep.train.len(),
                prep.train.num_brochures(),
                prep.test.len(),
                prep.test.num_brochures()
            );
        }
        Command::Salign { src, tgt, format, out, mean_ratio, variance } => {
            let cfg = config(&common)?;
            let format: ExportFormat = format.parse()?;
            let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
            let s = salign::segment(&read(&src)?);
            let t = salign::segment(&read(&tgt)?);
            let params = AlignParams { mean_ratio, variance };
            let result = salign::gale_church_align(&s, &t, &params);
            let files = salign::export(&result, &s, &t, format, &out, (&cfg.src_lang, &cfg.tgt_lang))?;
            println!("{} beads, cost {:.4}", result.beads.len(), result.total_cost);
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Train { src, tgt } => {
            let cfg = config(&common)?;
            let train = match (src, tgt) {
                (Some(s), Some(t)) => corpus::load_plaintext(s, t)?,
                _ => evalmetrics::prepare_experiment(cfg.variant, &cfg.load_corpus()?, &cfg)?.train,
            };
            let (system, report) = TrainedSystem::train(&train, &cfg)?;
            system.save(&cfg.model_dir)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_atomic(&cfg.model_dir.join("training-report.json"), json.as_bytes())?;
            println!(
                "trained on {} pairs: {} phrase pairs, LM n-grams {:?} -> {}",
                report.pairs_kept,
                report.phrase_pairs,
                report.lm_ngrams,
                cfg.model_dir.display()
            );
        }
        Command::Translate { input, output, report, marked } => {
            let cfg = config(&common)?;
            let system = TrainedSystem::load(&cfg.model_dir, &cfg)?;
            let lines = read_lines(&input)?;
            let outputs = system.translate(&lines, &cfg)?;
            write_atomic(&output, lines_to_string(outputs.iter().map(|o| o.tokens.join(" "))).as_bytes())?;
            if let Some(r) = report {
                write_atomic(&r, lines_to_string(outputs.iter().map(TranslationOutput::to_json)).as_bytes())?;
            }
            if let Some(m) = marked {
                write_atomic(&m, lines_to_string(outputs.iter().map(marked_line)).as_bytes())?;
            }
            let oov: usize = outputs.iter().map(|o| o.oov_spans.len()).sum();
            println!("translated {} lines, {} untranslated tokens", outputs.len(), oov);
        }
        Command::Postedit { report, output, edits, dictionary } => {
            let cfg = config(&common)?;
            let outputs: Vec<TranslationOutput> = read_lines(&report)?
                .iter()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| TranslationOutput::from_json(l).map_err(|e| Error::parse("decoder report", i + 1, e.to_string())))
                .collect::<Result<_>>()?;
            let dict = match dictionary.as_ref().or(cfg.dictionary.as_ref()) {
                Some(p) => MedicalDictionary::load(p)?,
                None => MedicalDictionary::default(),
            };
            let client = translator(&cfg)?;
            let (edited, reports) = postedit::post_edit_pipeline(
                &outputs,
                &dict,
                client.client(),
                (&cfg.src_lang, &cfg.tgt_lang),
                cfg.dictionary_max_window,
            );
            write_atomic(&output, lines_to_string(edited.iter().map(|o| o.tokens.join(" "))).as_bytes())?;
            if let Some(e) = edits {
                let body = lines_to_string(reports.iter().map(|r| serde_json::to_string(r).expect("report serializes")));
                write_atomic(&e, body.as_bytes())?;
            }
            let count = |s| reports.iter().map(|r| r.count(s)).sum::<usize>();
            println!(
                "dictionary {}, external {}, unresolved {}",
                count(postedit::EditSource::Dictionary),
                count(postedit::EditSource::External),
                count(postedit::EditSource::None)
            );
        }
        Command::Bleu { cand, reference, smooth, json } => {
            let c = tokens_of(&read_lines(&cand)?);
            let r = tokens_of(&read_lines(&reference)?);
            let report = bleu_with(
                &c,
                &r,
                BleuOptions {
                    smoothing: smooth,
                    ..BleuOptions::default()
                },
            )?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                println!("{}", report.display_score());
            }
        }
        Command::Experiment { id, out } => {
            let cfg = config(&common)?;
            let base = cfg.load_corpus()?;
            let report = evalmetrics::run_experiment(id, &base, &cfg)?;
            let path = out.unwrap_or_else(|| cfg.output_dir.join(format!("experiment-{id}.json")));
            write_atomic(&path, report.to_json().as_bytes())?;
            println!(
                "experiment {id}: train {} / test {} lines, BLEU {} -> {}",
                report.train_lines,
                report.test_lines,
                report.bleu.display_score(),
                path.display()
            );
        }
        Command::Report { reports, compare, out } => {
            let mut text = String::new();
            if !reports.is_empty() {
                let parsed: Vec<ExperimentReport> = reports
                    .iter()
                    .map(|p| {
                        let s = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                        serde_json::from_str(&s).map_err(|e| Error::parse("experiment report", e.line(), e.to_string()))
                    })
                    .collect::<Result<_>>()?;
                text.push_str(&evalmetrics::table2_tsv(&parsed));
            }
            if !compare.is_empty() {
                let rows = compare.iter().map(|spec| compare_row(spec)).collect::<Result<Vec<_>>>()?;
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(&evalmetrics::table3_tsv(&rows));
            }
            if text.is_empty() {
                return Err(Error::validation("nothing to report: give report files or --compare"));
            }
            match out {
                Some(p) => write_atomic(&p, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn compare_row(spec: &str) -> Result<(String, evalmetrics::PrePostReport)> {
    let bad = || Error::validation(format!("--compare expects NAME=PRE,POST,REF, got {spec:?}"));
    let (name, files) = spec.split_once('=').ok_or_else(bad)?;
    let f: Vec<&str> = files.split(',').collect();
    if f.len() != 3 {
        return Err(bad());
    }
    let as_outputs = |p: &str| -> Result<Vec<TranslationOutput>> {
        Ok(tokens_of(&read_lines(Path::new(p))?)
            .into_iter()
            .map(|tokens| TranslationOutput {
                tokens,
                oov_spans: Vec::new(),
                model_score: 0.0,
                segmentation: Vec::new(),
            })
            .collect())
    };
    let refs = tokens_of(&read_lines(Path::new(f[2]))?);
    Ok((name.to_string(), compare_pre_post(&as_outputs(f[0])?, &as_outputs(f[1])?, &refs)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }

    #[test]
    fn usage_exit_codes() {
        assert_eq!(run(["pbsmt", "--help"]), 0);
        assert_eq!(run(["pbsmt", "bleu", "--help"]), 0);
        assert_eq!(run(["pbsmt", "frobnicate"]), 1);
        assert_eq!(run(["pbsmt", "experiment", "9"]), 1);
        assert_eq!(run(["pbsmt", "bleu", "--cand", "/nonexistent/a", "--ref", "/nonexistent/b"]), 2);
    }
}
