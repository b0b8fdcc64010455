//! Toolkit for building and auditing low-resource NER corpora.
//!
//! The crate covers the non-neural side of a weak-supervision pipeline:
//!
//! - [`corpus`]: IOB2 data model and CoNLL-style I/O
//! - [`weak`]: gazetteer + date-rule distant supervision
//! - [`noise`]: clean/noisy confusion-matrix estimation and correction
//! - [`eval`]: entity-level P/R/F1, OOV rate, bucketed error analysis
//! - [`agreement`]: Fleiss' kappa, annotator confusion, QC flags
//! - [`transfer`]: transfer-language features and ranking
//! - [`diacritics`]: stripping, seeded corruption, restoration baseline
//! - [`lm`]: back-off n-gram language models with ARPA I/O
//! - [`vocab`]: subword-vocabulary reduction and UNK accounting

pub mod agreement;
pub mod corpus;
pub mod diacritics;
pub mod eval;
pub mod lm;
pub mod noise;
pub mod transfer;
pub mod vocab;
pub mod weak;
