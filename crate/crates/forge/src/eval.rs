//! Entity-level evaluation: exact-match P/R/F1, OOV-entity rate, and
//! bucketed hard-case analysis (zero-frequency and long entities).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, EntityClass, EntitySpan, TaggedSentence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("corpora are misaligned: {0}")]
    Misaligned(String),
    #[error("test corpus contains no entities")]
    NoTestEntities,
}

/// Precision/recall/F1 with the underlying counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1, tp, fp, fn_ }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub overall: Prf,
    pub per_class: BTreeMap<String, Prf>,
}

fn check_aligned(gold: &Corpus, pred: &Corpus) -> Result<(), EvalError> {
    if gold.sentences.len() != pred.sentences.len() {
        return Err(EvalError::Misaligned(format!(
            "sentence counts differ ({} vs {})",
            gold.sentences.len(),
            pred.sentences.len()
        )));
    }
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::Misaligned(format!(
                "token counts differ in sentence {i} ({} vs {})",
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

fn keep(span: &EntitySpan, classes: Option<&[EntityClass]>) -> bool {
    classes.map_or(true, |cs| cs.contains(&span.class))
}

/// CoNLL exact-match span P/R/F1, micro-averaged, with optional class filter.
pub fn span_prf(
    gold: &Corpus,
    pred: &Corpus,
    classes: Option<&[EntityClass]>,
) -> Result<PrfReport, EvalError> {
    check_aligned(gold, pred)?;
    let mut per_class: BTreeMap<EntityClass, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in gold.sentences.iter().zip(&pred.sentences) {
        let gold_spans: HashSet<EntitySpan> =
            g.spans().into_iter().filter(|s| keep(s, classes)).collect();
        let pred_spans: HashSet<EntitySpan> =
            p.spans().into_iter().filter(|s| keep(s, classes)).collect();
        for span in &pred_spans {
            let cell = per_class.entry(span.class).or_default();
            if gold_spans.contains(span) {
                cell.0 += 1;
            } else {
                cell.1 += 1;
            }
        }
        for span in &gold_spans {
            if !pred_spans.contains(span) {
                per_class.entry(span.class).or_default().2 += 1;
            }
        }
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut report = BTreeMap::new();
    for (class, (ctp, cfp, cfn)) in &per_class {
        tp += ctp;
        fp += cfp;
        fn_ += cfn;
        report.insert(class.to_string(), Prf::from_counts(*ctp, *cfp, *cfn));
    }
    Ok(PrfReport {
        overall: Prf::from_counts(tp, fp, fn_),
        per_class: report,
    })
}

fn surface(sentence: &TaggedSentence, span: &EntitySpan) -> String {
    sentence.tokens()[span.start..span.end].join(" ")
}

fn surface_set(corpus: &Corpus) -> HashSet<String> {
    let mut set = HashSet::new();
    for sentence in &corpus.sentences {
        for span in sentence.spans() {
            set.insert(surface(sentence, &span));
        }
    }
    set
}

/// Percentage of test entity occurrences whose exact surface (class-ignored)
/// never appears as an entity in the training corpus.
pub fn oov_entity_rate(test: &Corpus, train: &Corpus) -> Result<f64, EvalError> {
    let train_surfaces = surface_set(train);
    let mut total = 0usize;
    let mut oov = 0usize;
    for sentence in &test.sentences {
        for span in sentence.spans() {
            total += 1;
            if !train_surfaces.contains(&surface(sentence, &span)) {
                oov += 1;
            }
        }
    }
    if total == 0 {
        return Err(EvalError::NoTestEntities);
    }
    Ok(100.0 * oov as f64 / total as f64)
}

/// F1 over the whole test set and over two hard buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub f1_all: Prf,
    pub f1_zero_freq: Option<Prf>,
    pub f1_long: Option<Prf>,
    pub delta_zero_freq: Option<f64>,
    pub delta_long: Option<f64>,
}

/// Long-entity threshold in tokens.
pub const LONG_ENTITY_MIN_TOKENS: usize = 4;

/// Bucketed F1: zero-frequency entities (surface absent from train) and
/// long entities (≥ 4 tokens). Within a bucket, predictions that do not
/// overlap any bucketed gold span are ignored; overlapping non-matches
/// count as false positives.
pub fn bucket_f1(gold: &Corpus, pred: &Corpus, train: &Corpus) -> Result<BucketReport, EvalError> {
    check_aligned(gold, pred)?;
    let train_surfaces = surface_set(train);
    let f1_all = span_prf(gold, pred, None)?.overall;

    let zero_freq = bucket_prf(gold, pred, |sentence, span| {
        !train_surfaces.contains(&surface(sentence, span))
    });
    let long = bucket_prf(gold, pred, |_, span| span.len() >= LONG_ENTITY_MIN_TOKENS);

    Ok(BucketReport {
        f1_all,
        delta_zero_freq: zero_freq.map(|b| b.f1 - f1_all.f1),
        delta_long: long.map(|b| b.f1 - f1_all.f1),
        f1_zero_freq: zero_freq,
        f1_long: long,
    })
}

fn overlaps(a: &EntitySpan, b: &EntitySpan) -> bool {
    a.start < b.end && b.start < a.end
}

fn bucket_prf<F>(gold: &Corpus, pred: &Corpus, in_bucket: F) -> Option<Prf>
where
    F: Fn(&TaggedSentence, &EntitySpan) -> bool,
{
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut any_gold = false;
    for (g, p) in gold.sentences.iter().zip(&pred.sentences) {
        let bucketed: Vec<EntitySpan> = g
            .spans()
            .into_iter()
            .filter(|s| in_bucket(g, s))
            .collect();
        if bucketed.is_empty() {
            continue;
        }
        any_gold = true;
        let gold_set: HashSet<EntitySpan> = bucketed.iter().copied().collect();
        let mut matched: HashSet<EntitySpan> = HashSet::new();
        for span in p.spans() {
            if gold_set.contains(&span) {
                tp += 1;
                matched.insert(span);
            } else if bucketed.iter().any(|gs| overlaps(gs, &span)) {
                fp += 1;
            }
        }
        fn_ += bucketed.iter().filter(|s| !matched.contains(s)).count();
    }
    if any_gold {
        Some(Prf::from_counts(tp, fp, fn_))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, ParseMode};

    fn corpus(text: &str) -> Corpus {
        parse_conll(text, ParseMode::Strict).unwrap()
    }

    #[test]
    fn prf_perfect() {
        let gold = corpus("a\tB-PER\nb\tI-PER\nc\tO\n\n");
        let r = span_prf(&gold, &gold, None).unwrap();
        assert_eq!(r.overall.f1, 1.0);
        assert_eq!(r.per_class["PER"].tp, 1);
    }

    #[test]
    fn prf_boundary_error() {
        // gold {(0,2,PER),(4,5,LOC)}, pred {(0,2,PER),(4,6,LOC)}
        let gold = corpus("a\tB-PER\nb\tI-PER\nc\tO\nd\tO\ne\tB-LOC\nf\tO\n\n");
        let pred = corpus("a\tB-PER\nb\tI-PER\nc\tO\nd\tO\ne\tB-LOC\nf\tI-LOC\n\n");
        let r = span_prf(&gold, &pred, None).unwrap();
        assert_eq!(r.overall.precision, 0.5);
        assert_eq!(r.overall.recall, 0.5);
        assert_eq!(r.overall.f1, 0.5);
    }

    #[test]
    fn prf_empty_prediction() {
        let gold = corpus("a\tB-PER\n\n");
        let pred = corpus("a\tO\n\n");
        let r = span_prf(&gold, &pred, None).unwrap();
        assert_eq!(r.overall.precision, 0.0);
        assert_eq!(r.overall.fp, 0);
        assert_eq!(r.overall.recall, 0.0);
    }

    #[test]
    fn prf_class_filter() {
        let gold = corpus("a\tB-PER\nb\tB-DATE\n\n");
        let pred = corpus("a\tB-PER\nb\tO\n\n");
        let three = [EntityClass::Per, EntityClass::Loc, EntityClass::Org];
        let r = span_prf(&gold, &pred, Some(&three)).unwrap();
        assert_eq!(r.overall.f1, 1.0);
    }

    #[test]
    fn prf_misaligned() {
        let gold = corpus("a\tO\n\n");
        let pred = corpus("a\tO\nb\tO\n\n");
        assert!(span_prf(&gold, &pred, None).is_err());
    }

    #[test]
    fn oov_train_empty() {
        let test = corpus("a\tB-PER\n\n");
        let train = corpus("x\tO\n\n");
        assert_eq!(oov_entity_rate(&test, &train).unwrap(), 100.0);
    }

    #[test]
    fn oov_all_present() {
        let test = corpus("a\tB-PER\n\n");
        let train = corpus("a\tB-LOC\n\n"); // class-insensitive
        assert_eq!(oov_entity_rate(&test, &train).unwrap(), 0.0);
    }

    #[test]
    fn oov_self_is_zero() {
        let test = corpus("a\tB-PER\nb\tB-LOC\n\n");
        assert_eq!(oov_entity_rate(&test, &test).unwrap(), 0.0);
    }

    #[test]
    fn oov_no_entities() {
        let test = corpus("a\tO\n\n");
        let train = corpus("a\tO\n\n");
        assert_eq!(oov_entity_rate(&test, &train), Err(EvalError::NoTestEntities));
    }

    #[test]
    fn buckets_empty_train_matches_all() {
        let gold = corpus("a\tB-PER\nb\tO\nc\tB-LOC\n\n");
        let pred = corpus("a\tB-PER\nb\tO\nc\tO\n\n");
        let train = corpus("x\tO\n\n");
        let report = bucket_f1(&gold, &pred, &train).unwrap();
        assert_eq!(report.f1_zero_freq.unwrap(), report.f1_all);
    }

    #[test]
    fn buckets_missed_long_entity() {
        // One 4-token LOC entity missed, one 1-token PER hit.
        let gold = corpus("a\tB-LOC\nb\tI-LOC\nc\tI-LOC\nd\tI-LOC\ne\tB-PER\n\n");
        let pred = corpus("a\tO\nb\tO\nc\tO\nd\tO\ne\tB-PER\n\n");
        let train = corpus("x\tO\n\n");
        let report = bucket_f1(&gold, &pred, &train).unwrap();
        assert_eq!(report.f1_long.unwrap().f1, 0.0);
        assert!(report.f1_all.f1 < 1.0);
    }

    #[test]
    fn buckets_no_long_entities() {
        let gold = corpus("a\tB-PER\n\n");
        let train = corpus("x\tO\n\n");
        let report = bucket_f1(&gold, &gold, &train).unwrap();
        assert!(report.f1_long.is_none());
    }
}
