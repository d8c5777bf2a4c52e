//! Phrase-based statistical machine translation toolkit.
//!
//! The crate covers the whole classic pipeline for a small bilingual
//! domain corpus:
//!
//! * [`corpus`]: aligned bilingual corpora, cleaning, the seven corpus
//!   variants and train/test splitting.
//! * [`salign`]: length-based sentence alignment with bead editing and
//!   TMX / XML / plain-text export.
//! * [`textprep`]: tokenization, truecasing and pair cleaning.
//! * [`wordalign`]: IBM Model 1 EM alignment and symmetrization.
//! * [`phrasetable`]: consistent phrase-pair extraction and scoring.
//! * [`lm`]: interpolated Kneser-Ney n-gram models with ARPA I/O.
//! * [`decoder`]: stack-based beam search over a log-linear model.
//! * [`evalmetrics`]: corpus BLEU and the experiment harness.
//! * [`postedit`]: dictionary and external-service repair of unknown words.
//! * [`cli`]: the `pbsmt` command-line driver.
//!
//! Runnable walkthroughs for each stage live in the crate's `examples/`
//! directory.

pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod evalmetrics;
pub mod lm;
pub mod phrasetable;
pub mod pipeline;
pub mod postedit;
pub mod salign;
pub mod seed;
pub mod synth;
pub mod textprep;
pub mod wordalign;

mod numfmt;

pub use error::{Error, Result};
